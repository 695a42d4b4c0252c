"""Shared exception hierarchy."""


class MuseKGError(Exception):
    """Base class for every error raised by this package."""
