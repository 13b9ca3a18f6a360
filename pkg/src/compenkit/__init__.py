"""compenkit - full projector compensation for high-resolution inputs."""

__version__ = "0.1.0"
