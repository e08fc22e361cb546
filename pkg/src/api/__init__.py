"""Head Pose Tracker - Network Layer

asyncio TCP frame server (newline-delimited JSON)
FastAPI REST + WebSocket bridge
"""

__version__ = "1.0.0"

from .frame_server import FrameConnection, FrameServer, serve

__all__ = ["FrameConnection", "FrameServer", "serve"]
