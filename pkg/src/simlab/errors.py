"""Common exception base for the platform."""


class SimlabError(Exception):
    """Base class for every error raised by this package."""
