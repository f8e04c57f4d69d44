"""phaseflow: phase-routed dual-expert flow-matching policy at desk scale."""

__version__ = "0.1.0"
