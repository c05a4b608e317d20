#!/usr/bin/env python3
"""Decodes the checked-in golden files and prints their fields as JSON.

    python3 scripts/decode_golden.py client_hello.bin container_header.bin
"""

import json
import struct
import sys


def client_hello(data):
    magic, version, mtype, length = data[:4], data[4], data[5], struct.unpack_from("<I", data, 6)[0]
    assert magic == b"HHEM", magic
    body = data[10:]
    assert len(body) == length, (len(body), length)
    p, t, r, mix = struct.unpack_from("<IIIB", body, 0)
    off = 13
    kind, n, log_w = struct.unpack_from("<BII", body, off)
    off += 9
    (sigma,) = struct.unpack_from("<d", body, off)
    off += 8
    (qlen,) = struct.unpack_from("<I", body, off)
    off += 4
    q = int.from_bytes(body[off:off + qlen], "little")
    off += qlen
    assert off == len(body), "trailing bytes"
    return {
        "version": version, "type": mtype, "p": p, "t": t, "r": r, "mix": mix,
        "backend": kind, "n": n, "log_w": log_w, "sigma": sigma, "q": str(q),
    }


def container_header(data):
    magic = data[:4]
    assert magic == b"HHE1", magic
    p, t, r, nonce, count = struct.unpack_from("<IIIQQ", data, 4)
    return {"p": p, "t": t, "r": r, "nonce": nonce, "word_count": count}


def main(argv):
    hello, header = argv[1], argv[2]
    with open(hello, "rb") as fh:
        h = client_hello(fh.read())
    with open(header, "rb") as fh:
        c = container_header(fh.read())
    print(json.dumps({"client_hello": h, "container_header": c}, sort_keys=True))


if __name__ == "__main__":
    main(sys.argv)
