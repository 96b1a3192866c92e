import math

import anyio
from anyio.abc import ByteStream
from anyio.streams.memory import MemoryObjectReceiveStream, MemoryObjectSendStream
from typing_extensions import override


class MemoryByteStream(ByteStream):
    """Byte stream over a pair of memory object streams; sends are split into `chunk` sized pieces."""

    def __init__(
        self,
        send_stream: MemoryObjectSendStream[bytes],
        receive_stream: MemoryObjectReceiveStream[bytes],
        chunk: int = 1 << 16,
    ) -> None:
        self.__send_stream = send_stream
        self.__receive_stream = receive_stream
        self.__chunk = chunk

    @override
    async def receive(self, max_bytes: int = 65536) -> bytes:
        try:
            return await self.__receive_stream.receive()
        except anyio.ClosedResourceError:
            raise anyio.EndOfStream from None

    @override
    async def send(self, item: bytes) -> None:
        for start in range(0, len(item), self.__chunk):
            await self.__send_stream.send(item[start : start + self.__chunk])

    @override
    async def send_eof(self) -> None:
        await self.__send_stream.aclose()

    @override
    async def aclose(self) -> None:
        await self.__send_stream.aclose()
        await self.__receive_stream.aclose()


def memory_stream_pair(chunk: int = 1 << 16) -> tuple[MemoryByteStream, MemoryByteStream]:
    left_send, right_receive = anyio.create_memory_object_stream[bytes](math.inf)
    right_send, left_receive = anyio.create_memory_object_stream[bytes](math.inf)

    return MemoryByteStream(left_send, left_receive, chunk), MemoryByteStream(right_send, right_receive, chunk)

