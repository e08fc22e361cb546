"""
TCP Frame Server

Newline-delimited JSON over TCP. A client sends one frame per line and
gets one line back per frame:

    -> {"t": 0.033, "pitch": 1.2, "yaw": -4.0, "roll": 0.3}
    <- {"t": 0.033, "pitch": ..., "yaw": ..., "roll": ..., "vp": ..., "vy": ..., "vr": ...}

Each connection owns one FilterSession, opened from its first frame and
discarded on close. A malformed, oversize or out-of-order line is
answered with {"error": ...} and the session carries on; a degraded
covariance resets the session so the next frame re-initializes it.
"""

import asyncio
import logging
import time
from typing import List, Optional, Tuple

from core.errors import DegradedCovarianceError, OrderingError
from core.kalman import FilterSession
from pipeline.protocol import decode_frame_line, encode_line, error_to_dict, posterior_to_dict
from pipeline.runner import SessionFactory


logger = logging.getLogger(__name__)

MAX_LINE_BYTES = 64 * 1024


class FrameConnection:
    """Per-connection protocol state: one session, line counter, latencies."""

    def __init__(self, factory: SessionFactory, peer: str = "?"):
        self.factory = factory
        self.peer = peer
        self.session: Optional[FilterSession] = None
        self.lines = 0
        self.latencies_ms: List[float] = []

    def handle_line(self, line: str) -> Optional[str]:
        """Reply line for one request line, or None for a blank line."""
        if not line.strip():
            return None
        self.lines += 1
        started = time.perf_counter()
        try:
            frame = decode_frame_line(line)
        except ValueError as e:
            logger.warning("%s line %d: %s", self.peer, self.lines, e)
            return encode_line(error_to_dict(str(e), self.lines))

        try:
            if self.session is None:
                self.session = self.factory.open(frame)
                state = self.session.state
            else:
                state = self.session.step(frame)
        except OrderingError as e:
            return encode_line(error_to_dict(str(e), self.lines))
        except DegradedCovarianceError as e:
            logger.warning("%s: %s; session reset", self.peer, e)
            self.session = None
            return encode_line(error_to_dict(f"{e}; session reset", self.lines))
        except ValueError as e:
            return encode_line(error_to_dict(str(e), self.lines))

        self.latencies_ms.append((time.perf_counter() - started) * 1000.0)
        return encode_line(posterior_to_dict(frame.timestamp, state))

    def reject_line(self, message: str) -> str:
        """Error reply for a line that was dropped unread."""
        self.lines += 1
        logger.warning("%s line %d: %s", self.peer, self.lines, message)
        return encode_line(error_to_dict(message, self.lines))


class FrameServer:
    """asyncio TCP server; one FrameConnection per client."""

    def __init__(
        self,
        factory: SessionFactory,
        host: str = "127.0.0.1",
        port: int = 9999,
        line_limit: int = MAX_LINE_BYTES,
    ):
        self.factory = factory
        self.host = host
        self.port = port
        self.line_limit = line_limit
        self._server: Optional[asyncio.AbstractServer] = None
        self.connections = 0

    async def start(self) -> Tuple[str, int]:
        """Bind and start accepting; returns the bound (host, port)."""
        self._server = await asyncio.start_server(
            self.handle_client, self.host, self.port, limit=self.line_limit
        )
        host, port = self._server.sockets[0].getsockname()[:2]
        logger.info("Frame server listening on %s:%d", host, port)
        return host, port

    async def _skip_line(self, reader: asyncio.StreamReader, buffered: int):
        """Drop the rest of an oversize line, through its newline."""
        while True:
            await reader.readexactly(buffered)
            try:
                await reader.readuntil(b"\n")
                return
            except asyncio.LimitOverrunError as e:
                buffered = e.consumed

    async def handle_client(self, reader: asyncio.StreamReader, writer: asyncio.StreamWriter):
        peername = writer.get_extra_info("peername")
        peer = f"{peername[0]}:{peername[1]}" if peername else "?"
        connection = FrameConnection(self.factory, peer)
        self.connections += 1
        logger.info("Connection from %s", peer)
        try:
            while True:
                try:
                    raw = await reader.readuntil(b"\n")
                except asyncio.IncompleteReadError as e:
                    raw = e.partial
                except asyncio.LimitOverrunError as e:
                    await self._skip_line(reader, e.consumed)
                    raw = None
                if raw == b"":
                    break
                if raw is None:
                    reply = connection.reject_line(f"line exceeds {self.line_limit} bytes")
                else:
                    reply = connection.handle_line(raw.decode("utf-8", errors="replace"))
                if reply is not None:
                    writer.write(reply.encode("utf-8"))
                    await writer.drain()
        except asyncio.IncompleteReadError:
            logger.info("Connection from %s closed inside an oversize line", peer)
        except (ConnectionResetError, BrokenPipeError):
            logger.info("Connection from %s reset", peer)
        finally:
            writer.close()
            try:
                await writer.wait_closed()
            except (ConnectionResetError, BrokenPipeError):
                pass
            logger.info("Connection from %s closed after %d line(s)", peer, connection.lines)

    async def serve_forever(self):
        if self._server is None:
            await self.start()
        async with self._server:
            await self._server.serve_forever()

    async def stop(self):
        if self._server is not None:
            self._server.close()
            await self._server.wait_closed()
            self._server = None
            logger.info("Frame server stopped")


async def serve(host: str, port: int, factory: SessionFactory):
    """Run a frame server until cancelled."""
    server = FrameServer(factory, host, port)
    await server.start()
    try:
        await server.serve_forever()
    finally:
        await server.stop()
