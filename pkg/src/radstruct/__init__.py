"""radstruct: human-supervised, evidence-linked structured radiology reporting."""

__version__ = "0.1.0"
