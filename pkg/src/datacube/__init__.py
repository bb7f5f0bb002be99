"""Collaborative room-scale data analytics: shared session protocol, server,
client replicas, deterministic network simulation, and supporting math."""

__version__ = "0.1.0"

from .protocol import PROTOCOL_VERSION  # noqa: F401
