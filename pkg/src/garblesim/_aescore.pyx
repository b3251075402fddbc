# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""AES-128 encrypt-only core, compiled twin of garblesim.aes.

Same interface over 128-bit Python integers; the round-key object is an
opaque 176-byte native-order blob, valid only within this process.
"""

from cpython.bytes cimport PyBytes_FromStringAndSize

cdef unsigned int _M32 = 0xFFFFFFFFu

cdef unsigned char _SBOX[256]
cdef unsigned int _T0[256]
cdef unsigned int _T1[256]
cdef unsigned int _T2[256]
cdef unsigned int _T3[256]


cdef unsigned int _xtime(unsigned int a):
    a <<= 1
    if a & 0x100u:
        a ^= 0x11Bu
    return a & 0xFFu


cdef void _init_tables():
    cdef int i, x, k
    cdef unsigned int p, b, s, s2, s3, w
    cdef unsigned char alog[256]
    cdef unsigned char log[256]
    p = 1
    for i in range(255):
        alog[i] = <unsigned char>p
        log[p] = <unsigned char>i
        p ^= _xtime(p)
    alog[255] = 1  # generator cycle wraps: 3^255 = 3^0
    for x in range(256):
        b = 0 if x == 0 else alog[255 - log[x]]
        s = 0x63u
        for k in range(5):
            s ^= ((b << k) | (b >> (8 - k))) & 0xFFu
        _SBOX[x] = <unsigned char>s
    for x in range(256):
        s = _SBOX[x]
        s2 = _xtime(s)
        s3 = s2 ^ s
        w = (s2 << 24) | (s << 16) | (s << 8) | s3
        _T0[x] = w
        _T1[x] = ((w >> 8) | (w << 24)) & _M32
        _T2[x] = ((w >> 16) | (w << 16)) & _M32
        _T3[x] = ((w >> 24) | (w << 8)) & _M32


_init_tables()


def expand_key(key):
    """Expand a 128-bit integer key into an opaque round-key blob."""
    cdef unsigned long long hi = (key >> 64) & 0xFFFFFFFFFFFFFFFFULL
    cdef unsigned long long lo = key & 0xFFFFFFFFFFFFFFFFULL
    cdef unsigned int w[44]
    cdef unsigned int t, rcon
    cdef int i
    w[0] = <unsigned int>(hi >> 32)
    w[1] = <unsigned int>(hi & _M32)
    w[2] = <unsigned int>(lo >> 32)
    w[3] = <unsigned int>(lo & _M32)
    rcon = 1
    for i in range(4, 44):
        t = w[i - 1]
        if (i & 3) == 0:
            t = ((t << 8) | (t >> 24)) & _M32
            t = ((<unsigned int>_SBOX[t >> 24]) << 24) \
                | ((<unsigned int>_SBOX[(t >> 16) & 0xFFu]) << 16) \
                | ((<unsigned int>_SBOX[(t >> 8) & 0xFFu]) << 8) \
                | (<unsigned int>_SBOX[t & 0xFFu])
            t ^= rcon << 24
            rcon = _xtime(rcon)
        w[i] = w[i - 4] ^ t
    return PyBytes_FromStringAndSize(<char*>w, 176)


def encrypt_block(bytes rk, block):
    """Encrypt one 128-bit block under a blob from expand_key."""
    cdef const unsigned int* w = <const unsigned int*><const char*>rk
    cdef unsigned long long hi = (block >> 64) & 0xFFFFFFFFFFFFFFFFULL
    cdef unsigned long long lo = block & 0xFFFFFFFFFFFFFFFFULL
    cdef unsigned int s0, s1, s2, s3, u0, u1, u2, u3
    cdef int k
    s0 = (<unsigned int>(hi >> 32)) ^ w[0]
    s1 = (<unsigned int>(hi & _M32)) ^ w[1]
    s2 = (<unsigned int>(lo >> 32)) ^ w[2]
    s3 = (<unsigned int>(lo & _M32)) ^ w[3]
    for k in range(4, 40, 4):
        u0 = _T0[s0 >> 24] ^ _T1[(s1 >> 16) & 0xFFu] ^ _T2[(s2 >> 8) & 0xFFu] ^ _T3[s3 & 0xFFu] ^ w[k]
        u1 = _T0[s1 >> 24] ^ _T1[(s2 >> 16) & 0xFFu] ^ _T2[(s3 >> 8) & 0xFFu] ^ _T3[s0 & 0xFFu] ^ w[k + 1]
        u2 = _T0[s2 >> 24] ^ _T1[(s3 >> 16) & 0xFFu] ^ _T2[(s0 >> 8) & 0xFFu] ^ _T3[s1 & 0xFFu] ^ w[k + 2]
        u3 = _T0[s3 >> 24] ^ _T1[(s0 >> 16) & 0xFFu] ^ _T2[(s1 >> 8) & 0xFFu] ^ _T3[s2 & 0xFFu] ^ w[k + 3]
        s0 = u0
        s1 = u1
        s2 = u2
        s3 = u3
    u0 = (((<unsigned int>_SBOX[s0 >> 24]) << 24)
          | ((<unsigned int>_SBOX[(s1 >> 16) & 0xFFu]) << 16)
          | ((<unsigned int>_SBOX[(s2 >> 8) & 0xFFu]) << 8)
          | (<unsigned int>_SBOX[s3 & 0xFFu])) ^ w[40]
    u1 = (((<unsigned int>_SBOX[s1 >> 24]) << 24)
          | ((<unsigned int>_SBOX[(s2 >> 16) & 0xFFu]) << 16)
          | ((<unsigned int>_SBOX[(s3 >> 8) & 0xFFu]) << 8)
          | (<unsigned int>_SBOX[s0 & 0xFFu])) ^ w[41]
    u2 = (((<unsigned int>_SBOX[s2 >> 24]) << 24)
          | ((<unsigned int>_SBOX[(s3 >> 16) & 0xFFu]) << 16)
          | ((<unsigned int>_SBOX[(s0 >> 8) & 0xFFu]) << 8)
          | (<unsigned int>_SBOX[s1 & 0xFFu])) ^ w[42]
    u3 = (((<unsigned int>_SBOX[s3 >> 24]) << 24)
          | ((<unsigned int>_SBOX[(s0 >> 16) & 0xFFu]) << 16)
          | ((<unsigned int>_SBOX[(s1 >> 8) & 0xFFu]) << 8)
          | (<unsigned int>_SBOX[s2 & 0xFFu])) ^ w[43]
    hi = ((<unsigned long long>u0) << 32) | u1
    lo = ((<unsigned long long>u2) << 32) | u3
    return ((<object>hi) << 64) | lo
