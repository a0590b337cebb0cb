"""advdrive: a deterministic closed-loop adversarial testing sandbox for
small autonomous-driving stacks."""

__version__ = "0.1.0"
