"""Discrete-event simulator for 802.15.4 cluster-trees built as a subset of an RPL DODAG."""

__version__ = "0.1.0"
