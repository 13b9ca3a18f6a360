"""Integration tests that drive the command-line verbs."""
