"""Multi-pose fusion CT reconstruction package."""
