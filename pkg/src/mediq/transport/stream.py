from __future__ import annotations

import typing as t

import anyio
from anyio.streams.buffered import BufferedByteReceiveStream

from mediq.transport.envelope import LENGTH_PREFIX_SIZE, Envelope, FrameError, decode_body, encode, read_length

if t.TYPE_CHECKING:
    from anyio.abc import ByteSendStream, ByteStream


async def send_envelope(stream: ByteSendStream, env: Envelope) -> None:
    await stream.send(encode(env))


async def receive_envelope(reader: BufferedByteReceiveStream) -> Envelope:
    """
    Read one frame.

    Raises `anyio.EndOfStream` when the peer closed the stream on a frame boundary and `FrameError` when it closed it
    in the middle of a frame.
    """

    try:
        prefix = await reader.receive_exactly(LENGTH_PREFIX_SIZE)
    except anyio.IncompleteRead:
        if not reader.buffer:
            raise anyio.EndOfStream from None

        msg = "stream closed inside a length prefix"
        raise FrameError(msg) from None

    length = read_length(prefix)

    try:
        body = await reader.receive_exactly(length)
    except anyio.IncompleteRead:
        msg = "stream closed inside a frame body"
        raise FrameError(msg, length) from None

    return decode_body(body)


class FrameChannel:
    """Bidirectional envelope channel; sends are serialized so frames never interleave on the wire."""

    def __init__(self, stream: ByteStream) -> None:
        self.__stream = stream
        self.__reader = BufferedByteReceiveStream(stream)
        self.__send_lock = anyio.Lock()

    async def __aenter__(self) -> FrameChannel:
        return self

    async def __aexit__(self, *_: object) -> None:
        await self.aclose()

    def __aiter__(self) -> t.AsyncIterator[Envelope]:
        return self.__iterate()

    async def send(self, env: Envelope) -> None:
        async with self.__send_lock:
            await send_envelope(self.__stream, env)

    async def receive(self) -> Envelope:
        return await receive_envelope(self.__reader)

    async def aclose(self) -> None:
        await self.__stream.aclose()

    async def __iterate(self) -> t.AsyncIterator[Envelope]:
        while True:
            try:
                yield await self.receive()
            except anyio.EndOfStream:
                return
