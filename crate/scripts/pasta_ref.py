#!/usr/bin/env python3
"""Independent Pasta keystream reference.

Reads a vectors file (``p t r nonce counter key... -> keystream...``) and
recomputes every keystream from scratch with hashlib's SHAKE128.

    python3 scripts/pasta_ref.py vectors.txt [--no-mix]

Exits 0 when every line matches.
"""

import hashlib
import struct
import sys

TAG = b"HHEML-PASTA-RM"


class Shake:
    def __init__(self, seed):
        self.seed = seed
        self.buf = b""
        self.pos = 0

    def read(self, n):
        while self.pos + n > len(self.buf):
            self.buf = hashlib.shake_128(self.seed).digest(max(4096, 2 * len(self.buf)))
        out = self.buf[self.pos:self.pos + n]
        self.pos += n
        return out


def sampler(p, xof):
    mask = (1 << p.bit_length()) - 1
    while True:
        v = struct.unpack("<I", xof.read(4))[0] & mask
        if v < p:
            return v


def rank_full(m, t, p):
    a = [row[:] for row in m]
    for col in range(t):
        piv = next((r for r in range(col, t) if a[r][col] % p), None)
        if piv is None:
            return False
        a[col], a[piv] = a[piv], a[col]
        inv = pow(a[col][col], p - 2, p)
        for r in range(col + 1, t):
            f = a[r][col] * inv % p
            a[r] = [(x - f * y) % p for x, y in zip(a[r], a[col])]
    return True


def invertible(p, t, xof):
    while True:
        flat = [sampler(p, xof) for _ in range(t * t)]
        m = [flat[i * t:(i + 1) * t] for i in range(t)]
        if rank_full(m, t, p):
            return m


def layers(p, t, r, nonce, counter):
    xof = Shake(TAG + b"\x00" + struct.pack("<QQ", nonce, counter))
    out = []
    for _ in range(r + 1):
        ml = invertible(p, t, xof)
        mr = invertible(p, t, xof)
        cl = [sampler(p, xof) for _ in range(t)]
        cr = [sampler(p, xof) for _ in range(t)]
        out.append((ml, mr, cl, cr))
    return out


def affine(layer, x, p, t, mix):
    ml, mr, cl, cr = layer
    xl, xr = x[:t], x[t:]
    yl = [(sum(a * b for a, b in zip(row, xl)) + c) % p for row, c in zip(ml, cl)]
    yr = [(sum(a * b for a, b in zip(row, xr)) + c) % p for row, c in zip(mr, cr)]
    if mix:
        yl, yr = [(2 * a + b) % p for a, b in zip(yl, yr)], [(a + 2 * b) % p for a, b in zip(yl, yr)]
    return yl + yr


def feistel(x, p):
    return [x[0]] + [(x[i] + x[i - 1] * x[i - 1]) % p for i in range(1, len(x))]


def keystream(p, t, r, nonce, counter, key, mix=True):
    ls = layers(p, t, r, nonce, counter)
    x = affine(ls[0], list(key), p, t, mix)
    for j in range(1, r):
        x = affine(ls[j], feistel(x, p), p, t, mix)
    x = affine(ls[r], [pow(v, 3, p) for v in x], p, t, mix)
    return x[:t]


def main(argv):
    args = [a for a in argv[1:] if not a.startswith("--")]
    mix = "--no-mix" not in argv
    if len(args) != 1:
        print(__doc__, file=sys.stderr)
        return 2
    total = bad = 0
    with open(args[0]) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            lhs, rhs = line.split("->")
            nums = [int(v) for v in lhs.split()]
            want = [int(v) for v in rhs.split()]
            p, t, r, nonce, counter = nums[:5]
            key = nums[5:]
            got = keystream(p, t, r, nonce, counter, key, mix)
            total += 1
            if got != want:
                bad += 1
                print(f"line {lineno}: expected {want}, computed {got}")
    print(f"{total - bad}/{total} vectors match")
    return 0 if bad == 0 and total > 0 else 1


if __name__ == "__main__":
    sys.exit(main(sys.argv))
