"""Bit-exact frame layout shared by the in-memory and TCP transports.

    frame := length:u32le | opcode:u8 | sender:u32le | payload

``length`` counts the bytes after the length field (opcode, sender and
payload). Argmax traffic carries an inner header in its payload:

    argmax_payload := subop:u8 | step:u32le | ring elements (u64le each)
"""

from __future__ import annotations

import enum
import struct

LENGTH = struct.Struct("<I")
HEADER = struct.Struct("<BI")
MPC_HEADER = struct.Struct("<BI")
FRAME_OVERHEAD = LENGTH.size + HEADER.size
MAX_FRAME = 1 << 31


class Phase(enum.IntEnum):
    PREPROC = 1
    NOISE_SHARE = 2
    ARGMAX = 3
    OPEN = 4


class MpcOp(enum.IntEnum):
    OPEN_MASKED = 1
    OPEN_FINAL = 2
    TRIPLE_OPEN = 3


class FrameError(ValueError):
    pass


def encode_frame(opcode: int, sender: int, payload: bytes) -> bytes:
    body_len = HEADER.size + len(payload)
    if body_len >= MAX_FRAME:
        raise FrameError(f"frame of {body_len} bytes exceeds the limit")
    return LENGTH.pack(body_len) + HEADER.pack(int(opcode), sender) + payload


def decode_frame(frame: bytes) -> tuple[int, int, bytes]:
    if len(frame) < FRAME_OVERHEAD:
        raise FrameError(f"short frame ({len(frame)} bytes)")
    (body_len,) = LENGTH.unpack_from(frame)
    if body_len != len(frame) - LENGTH.size:
        raise FrameError(f"length field {body_len} != body of {len(frame) - LENGTH.size}")
    opcode, sender = HEADER.unpack_from(frame, LENGTH.size)
    try:
        Phase(opcode)
    except ValueError:
        raise FrameError(f"unknown opcode {opcode}") from None
    return opcode, sender, frame[FRAME_OVERHEAD:]


def encode_mpc(subop: int, step: int, elements: bytes) -> bytes:
    return MPC_HEADER.pack(int(subop), step) + elements


def decode_mpc(payload: bytes) -> tuple[int, int, bytes]:
    if len(payload) < MPC_HEADER.size:
        raise FrameError("short argmax payload")
    subop, step = MPC_HEADER.unpack_from(payload)
    try:
        MpcOp(subop)
    except ValueError:
        raise FrameError(f"unknown argmax opcode {subop}") from None
    return subop, step, payload[MPC_HEADER.size:]
