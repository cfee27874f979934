"""Desk-scale fall-detection cascade: threshold gating at the edge, tiered
distilled classifiers, escalation routing, and analytic latency accounting."""

__version__ = "0.1.0"
