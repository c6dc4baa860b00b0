# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled register-file kernel.

Twin of ``_pykernel`` (see its docstring for the layout and the exact-Z
bookkeeping contract). Every arithmetic expression mirrors the pure
version so both backends return bit-identical hashes and estimates.
"""

from libc.math cimport log, rint
from libc.stdio cimport snprintf
from libc.stdlib cimport calloc, free
from libc.string cimport memset

from cpython.bytes cimport PyBytes_FromStringAndSize

ctypedef unsigned long long u64

cdef extern from *:
    ctypedef unsigned long long u128 "unsigned __int128"
    int __builtin_clzll(unsigned long long)

cdef double _Z_SCALE = 2.0 ** -63

cdef u64 _P1 = 0x9E3779B185EBCA87ULL
cdef u64 _P2 = 0xC2B2AE3D27D4EB4FULL
cdef u64 _P3 = 0x165667B19E3779F9ULL
cdef u64 _P4 = 0x85EBCA77C2B2AE63ULL
cdef u64 _P5 = 0x27D4EB2F165667C5ULL


cdef inline u64 _rotl(u64 x, int r) noexcept:
    return (x << r) | (x >> (64 - r))


cdef inline u64 _fmix64(u64 h) noexcept:
    h ^= h >> 33
    h *= 0xFF51AFD7ED558CCDULL
    h ^= h >> 33
    h *= 0xC4CEB9FE1A85EC53ULL
    return h ^ (h >> 33)


cdef inline u64 _splitmix64(u64 x) noexcept:
    x += 0x9E3779B97F4A7C15ULL
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL
    return x ^ (x >> 31)


cdef u64 _hash64(const unsigned char* p, Py_ssize_t n, u64 salt) noexcept:
    cdef u64 acc = salt * _P1 + (<u64>n) * _P5 + _P4
    cdef u64 w
    cdef Py_ssize_t i = 0
    cdef int j
    while i + 8 <= n:
        w = (<u64>p[i]) | (<u64>p[i+1]) << 8 | (<u64>p[i+2]) << 16 \
            | (<u64>p[i+3]) << 24 | (<u64>p[i+4]) << 32 | (<u64>p[i+5]) << 40 \
            | (<u64>p[i+6]) << 48 | (<u64>p[i+7]) << 56
        acc = _rotl(acc ^ (w * _P2), 31) * _P1 + _P4
        i += 8
    if i < n:
        w = 0
        for j in range(<int>(n - i)):
            w |= (<u64>p[i + j]) << (8 * j)
        acc = _rotl(acc ^ (w * _P3), 27) * _P2 + _P5
    return _fmix64(acc)


def splitmix64(x):
    """One round of the splitmix64 mixer (a bijection on 64-bit ints)."""
    return _splitmix64(<u64>(x & 0xFFFFFFFFFFFFFFFF))


def hash64(bytes data, salt=0):
    """64-bit non-cryptographic hash of ``data`` keyed by ``salt``."""
    return _hash64(data, len(data), <u64>(salt & 0xFFFFFFFFFFFFFFFF))


def stream_element(seed, k):
    """Element ``k`` of the deterministic stream keyed by ``seed``."""
    cdef char buf[17]
    cdef u64 base = _splitmix64(<u64>(seed & 0xFFFFFFFFFFFFFFFF))
    cdef u64 v = _splitmix64(base + <u64>(k & 0xFFFFFFFFFFFFFFFF))
    snprintf(buf, 17, "%016llx", v)
    return PyBytes_FromStringAndSize(buf, 16)


cdef class RegisterFile:
    """R max-rank registers with incremental estimate bookkeeping."""

    cdef readonly int register_count
    cdef readonly int register_width
    cdef readonly u64 salt
    cdef readonly double alpha
    cdef readonly double switch_factor
    cdef int _bits
    cdef int _max_reg
    cdef unsigned char* _regs
    cdef int _zero
    cdef u128 _zs
    cdef double _alpha_r2

    def __cinit__(self, int register_count, int register_width, salt,
                  double alpha, double switch_factor):
        self.register_count = register_count
        self.register_width = register_width
        self.salt = <u64>(salt & 0xFFFFFFFFFFFFFFFF)
        self.alpha = alpha
        self.switch_factor = switch_factor
        self._bits = 0
        while (1 << (self._bits + 1)) <= register_count:
            self._bits += 1
        self._max_reg = (1 << register_width) - 1
        if self._max_reg > 63:
            self._max_reg = 63
        self._alpha_r2 = alpha * register_count * register_count
        self._regs = <unsigned char*>calloc(register_count, 1)
        if self._regs == NULL:
            raise MemoryError()
        self._zero = register_count
        self._zs = (<u128>register_count) << 63

    def __dealloc__(self):
        if self._regs != NULL:
            free(self._regs)

    # -- hashing ---------------------------------------------------------

    cdef inline void _split(self, const unsigned char* p, Py_ssize_t n,
                            int* index, int* rank) noexcept:
        cdef u64 h = _hash64(p, n, self.salt)
        cdef u64 g = h >> self._bits
        cdef int bitlen = 0 if g == 0 else 64 - __builtin_clzll(g)
        cdef int r = 1 + (64 - self._bits) - bitlen
        if r > self._max_reg:
            r = self._max_reg
        index[0] = <int>(h & <u64>(self.register_count - 1))
        rank[0] = r

    def hash_split(self, bytes element):
        """Map an element to its (register index, rank) pair."""
        cdef int index, rank
        self._split(element, len(element), &index, &rank)
        return index, rank

    # -- updates ---------------------------------------------------------

    cdef inline int _insert_raw(self, const unsigned char* p, Py_ssize_t n) noexcept:
        cdef int index, rank, old
        self._split(p, n, &index, &rank)
        old = self._regs[index]
        if rank <= old:
            return 0
        self._regs[index] = <unsigned char>rank
        if old == 0:
            self._zero -= 1
        self._zs -= ((<u128>1) << (63 - old)) - ((<u128>1) << (63 - rank))
        return rank - old

    def insert(self, bytes element):
        """Insert one element; return the register increment (0 if none)."""
        return self._insert_raw(element, len(element))

    def insert_many(self, elements):
        """Insert a batch; return how many changed a register."""
        cdef int changed = 0
        cdef bytes e
        for element in elements:
            e = element
            if self._insert_raw(e, len(e)) != 0:
                changed += 1
        return changed

    def insert_span(self, seed, start, count):
        """Insert ``count`` stream elements starting at index ``start``."""
        cdef char buf[17]
        cdef u64 base = _splitmix64(<u64>(seed & 0xFFFFFFFFFFFFFFFF))
        cdef u64 k0 = <u64>start
        cdef u64 i
        cdef int changed = 0
        for i in range(<u64>count):
            snprintf(buf, 17, "%016llx", _splitmix64(base + k0 + i))
            if self._insert_raw(<const unsigned char*>buf, 16) != 0:
                changed += 1
        return changed

    # -- estimates -------------------------------------------------------

    def z_sum(self):
        """Current harmonic-mean denominator Z = sum(2**-r_i)."""
        return (<double>self._zs) * _Z_SCALE

    def raw_estimate(self):
        return self._alpha_r2 / ((<double>self._zs) * _Z_SCALE)

    def linear_estimate(self):
        if self._zero == 0:
            return self.raw_estimate()
        return self.register_count * log((<double>self.register_count) / (<double>self._zero))

    def estimate(self):
        cdef double lc, z
        if self._zero > 0:
            lc = self.register_count * log((<double>self.register_count) / (<double>self._zero))
            if lc <= self.switch_factor * self.register_count:
                return <long long>rint(lc)
        z = (<double>self._zs) * _Z_SCALE
        return <long long>rint(self._alpha_r2 / z)

    # -- register access -------------------------------------------------

    def zero_registers(self):
        return self._zero

    def get_register(self, index):
        cdef Py_ssize_t i = index
        if i < 0 or i >= self.register_count:
            raise IndexError(index)
        return self._regs[i]

    def set_register(self, index, value):
        cdef Py_ssize_t i = index
        cdef int v = value
        cdef int old
        if i < 0 or i >= self.register_count:
            raise IndexError(index)
        if v < 0 or v > self._max_reg:
            raise ValueError(
                f"register value {value} outside supported range 0..{self._max_reg}"
            )
        old = self._regs[i]
        if v == old:
            return
        self._regs[i] = <unsigned char>v
        if old == 0:
            self._zero -= 1
        if v == 0:
            self._zero += 1
        if v > old:
            self._zs -= ((<u128>1) << (63 - old)) - ((<u128>1) << (63 - v))
        else:
            self._zs += ((<u128>1) << (63 - v)) - ((<u128>1) << (63 - old))

    def dump_registers(self):
        return PyBytes_FromStringAndSize(<const char*>self._regs, self.register_count)

    def load_registers(self, bytes data):
        cdef Py_ssize_t n = len(data)
        cdef const unsigned char* p = data
        cdef Py_ssize_t i
        if n != self.register_count:
            raise ValueError(
                f"expected {self.register_count} register bytes, got {n}"
            )
        for i in range(n):
            if p[i] > self._max_reg:
                raise ValueError(
                    f"register value {p[i]} outside supported range 0..{self._max_reg}"
                )
        self._zero = 0
        self._zs = 0
        for i in range(n):
            self._regs[i] = p[i]
            if p[i] == 0:
                self._zero += 1
            self._zs += (<u128>1) << (63 - p[i])

    def merge_registers(self, bytes data):
        """Take the elementwise maximum with another register dump."""
        cdef Py_ssize_t n = len(data)
        cdef const unsigned char* p = data
        cdef Py_ssize_t i
        cdef int old, v
        if n != self.register_count:
            raise ValueError(
                f"expected {self.register_count} register bytes, got {n}"
            )
        for i in range(n):
            if p[i] > self._max_reg:
                raise ValueError(
                    f"register value {p[i]} outside supported range 0..{self._max_reg}"
                )
        for i in range(n):
            v = p[i]
            old = self._regs[i]
            if v > old:
                self._regs[i] = <unsigned char>v
                if old == 0:
                    self._zero -= 1
                self._zs -= ((<u128>1) << (63 - old)) - ((<u128>1) << (63 - v))

    def reset(self):
        memset(self._regs, 0, self.register_count)
        self._zero = self.register_count
        self._zs = (<u128>self.register_count) << 63
