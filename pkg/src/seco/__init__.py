"""Secure split-model inference across a user and a gateway/remote server hierarchy."""

__version__ = "0.1.0"
