#!/usr/bin/env python3
"""Writes tests/golden/*.json: one canonical frame per message shape.

Canonical form: compact JSON, keys sorted, newline-terminated, binary fields
as padded standard base64. The C++ test rebuilds each message from the same
recipe and must reproduce these bytes exactly.
"""
import base64
import json
import pathlib
import struct
import sys


def seq(n, start=0):
    return bytes((start + i) % 256 for i in range(n))


def b64(b):
    return base64.b64encode(b).decode()


def bloom13():
    bits = bytearray(2)
    for p in (0, 5, 12):
        bits[p // 8] |= 0x80 >> (p % 8)
    return struct.pack(">I", 13) + bytes(bits)


MESSAGES = {
    "lookup_request_A": ("LookupRequest", "A", 3, {"token": b64(seq(32))}),
    "lookup_response_A": ("LookupResponse", "A", 3, {"pseudonym": b64(seq(16, 100)), "token": b64(seq(32))}),
    "lookup_request_B": ("LookupRequest", "B", 3, {"filter": b64(bloom13())}),
    "lookup_response_B": ("LookupResponse", "B", 3, {"matches": [
        {"item": b64(b"10.0.0.1"), "pseudonym": b64(seq(16, 1))},
        {"item": b64(b"10.0.0.2"), "pseudonym": b64(seq(16, 2))}]}),
    "lookup_request_C": ("LookupRequest", "C", 3, {"trapdoor": b64(bloom13())}),
    "lookup_response_C": ("LookupResponse", "C", 3, {"matches": [
        {"hmac": b64(seq(32, 7)), "pseudonym": b64(seq(16, 9))}]}),
    "lookup_response_C_empty": ("LookupResponse", "C", 0, {"matches": []}),
    "create_request_B": ("CreateRequest", "B", 3, {"item": b64(b"192.168.1.1")}),
    "create_request_C": ("CreateRequest", "C", 3, {"filter": b64(bloom13()), "hmac": b64(seq(32, 3))}),
    "create_request_D": ("CreateRequest", "D", 3, {"filter": b64(bloom13()), "hmac": b64(seq(32, 3))}),
    "create_response_C": ("CreateResponse", "C", 3, {"pseudonym": b64(seq(16, 42))}),
    "ot_public_key_D": ("OtPublicKey", "D", 3, {"group": "test", "s": b64(bytes.fromhex("0001a180"))}),
    "ot_transfer_request_D": ("OtTransferRequest", "D", 3, {
        "nonce": b64(seq(32, 0xA5)), "r": b64(bytes.fromhex("00017c90")), "trapdoor": b64(bloom13())}),
    "ot_transfer_response_D": ("OtTransferResponse", "D", 3, {
        "entries": [{"ct": b64(seq(38, 200)), "idx": b64(seq(32, 50))}], "retry": False}),
    "ot_transfer_response_D_retry": ("OtTransferResponse", "D", 3, {"entries": [], "retry": True}),
    "epoch_notice_A": ("EpochNotice", "A", 18446744073709551615, {"blind_bits": 120, "k_star": 14, "m": 20198}),
    "error_C": ("Error", "C", 3, {"code": "malformed", "detail": "invalid JSON"}),
}

out_dir = pathlib.Path(sys.argv[1] if len(sys.argv) > 1 else "tests/golden")
out_dir.mkdir(parents=True, exist_ok=True)
for name, (mtype, mode, epoch, body) in MESSAGES.items():
    frame = json.dumps({"body": body, "epoch": epoch, "mode": mode, "type": mtype},
                       sort_keys=True, separators=(",", ":"), ensure_ascii=False) + "\n"
    (out_dir / f"{name}.json").write_text(frame)
