"""AES-128 block encryption, pure-Python backend.

Encrypt-only: the label hash needs the forward permutation and nothing else.
Keys and blocks are 128-bit integers in big-endian word order (the integer
0x00112233_44556677_8899aabb_ccddeeff is the byte sequence 00 11 22 ... ff).
Round keys are flat tuples of 44 32-bit words.

The S-box and round tables are derived at import from the GF(2^8) generator
rather than embedded as literals; the test suite pins FIPS-197 vectors and
cross-checks against an independent AES implementation.
"""

_M32 = 0xFFFFFFFF


def _xtime(a: int) -> int:
    a <<= 1
    return (a ^ 0x11B) & 0xFF if a & 0x100 else a


def _build_sbox() -> tuple[int, ...]:
    # log/antilog tables over GF(2^8) with generator 0x03
    alog = [1] * 256
    log = [0] * 256
    p = 1
    for i in range(255):
        alog[i] = p
        log[p] = i
        p ^= _xtime(p)
    alog[255] = 1  # generator cycle wraps: 3^255 = 3^0
    sbox = [0] * 256
    for x in range(256):
        inv = 0 if x == 0 else alog[255 - log[x]]
        b = inv
        s = 0x63
        for k in range(5):
            s ^= (b << k | b >> (8 - k)) & 0xFF
        sbox[x] = s
    return tuple(sbox)


SBOX = _build_sbox()


def _build_tables():
    t0, t1, t2, t3 = [], [], [], []
    for x in range(256):
        s = SBOX[x]
        s2 = _xtime(s)
        s3 = s2 ^ s
        w = (s2 << 24) | (s << 16) | (s << 8) | s3
        t0.append(w)
        t1.append(((w >> 8) | (w << 24)) & _M32)
        t2.append(((w >> 16) | (w << 16)) & _M32)
        t3.append(((w >> 24) | (w << 8)) & _M32)
    return tuple(t0), tuple(t1), tuple(t2), tuple(t3)


_T0, _T1, _T2, _T3 = _build_tables()


def expand_key(key: int):
    """Expand a 128-bit integer key into the 44-word AES-128 round schedule."""
    w = [(key >> 96) & _M32, (key >> 64) & _M32, (key >> 32) & _M32, key & _M32]
    sbox = SBOX
    rcon = 1
    for i in range(4, 44):
        t = w[i - 1]
        if i & 3 == 0:
            t = ((t << 8) | (t >> 24)) & _M32
            t = (
                (sbox[t >> 24] << 24)
                | (sbox[(t >> 16) & 0xFF] << 16)
                | (sbox[(t >> 8) & 0xFF] << 8)
                | sbox[t & 0xFF]
            )
            t ^= rcon << 24
            rcon = _xtime(rcon)
        w.append(w[i - 4] ^ t)
    return tuple(w)


def encrypt_block(rk, block: int) -> int:
    """Encrypt one 128-bit block under a schedule from expand_key."""
    t0, t1, t2, t3 = _T0, _T1, _T2, _T3
    s0 = ((block >> 96) & _M32) ^ rk[0]
    s1 = ((block >> 64) & _M32) ^ rk[1]
    s2 = ((block >> 32) & _M32) ^ rk[2]
    s3 = (block & _M32) ^ rk[3]
    for k in range(4, 40, 4):
        u0 = t0[s0 >> 24] ^ t1[(s1 >> 16) & 0xFF] ^ t2[(s2 >> 8) & 0xFF] ^ t3[s3 & 0xFF] ^ rk[k]
        u1 = t0[s1 >> 24] ^ t1[(s2 >> 16) & 0xFF] ^ t2[(s3 >> 8) & 0xFF] ^ t3[s0 & 0xFF] ^ rk[k + 1]
        u2 = t0[s2 >> 24] ^ t1[(s3 >> 16) & 0xFF] ^ t2[(s0 >> 8) & 0xFF] ^ t3[s1 & 0xFF] ^ rk[k + 2]
        u3 = t0[s3 >> 24] ^ t1[(s0 >> 16) & 0xFF] ^ t2[(s1 >> 8) & 0xFF] ^ t3[s2 & 0xFF] ^ rk[k + 3]
        s0, s1, s2, s3 = u0, u1, u2, u3
    sbox = SBOX
    e0 = (
        (sbox[s0 >> 24] << 24)
        | (sbox[(s1 >> 16) & 0xFF] << 16)
        | (sbox[(s2 >> 8) & 0xFF] << 8)
        | sbox[s3 & 0xFF]
    ) ^ rk[40]
    e1 = (
        (sbox[s1 >> 24] << 24)
        | (sbox[(s2 >> 16) & 0xFF] << 16)
        | (sbox[(s3 >> 8) & 0xFF] << 8)
        | sbox[s0 & 0xFF]
    ) ^ rk[41]
    e2 = (
        (sbox[s2 >> 24] << 24)
        | (sbox[(s3 >> 16) & 0xFF] << 16)
        | (sbox[(s0 >> 8) & 0xFF] << 8)
        | sbox[s1 & 0xFF]
    ) ^ rk[42]
    e3 = (
        (sbox[s3 >> 24] << 24)
        | (sbox[(s0 >> 16) & 0xFF] << 16)
        | (sbox[(s1 >> 8) & 0xFF] << 8)
        | sbox[s2 & 0xFF]
    ) ^ rk[43]
    return (e0 << 96) | (e1 << 64) | (e2 << 32) | e3
