"""Elliptic-curve signature scheme with 512-bit keys.

Implements the GOST R 34.10-2012 signing equations (s = r*d + k*e mod q,
verification via z1*G + z2*P) over the published 512-bit test parameter set
of that standard. Points use Jacobian coordinates; the base point gets a
fixed 4-bit window table, and public keys that keep showing up in
verification are promoted to their own window tables so bulk verification
(chain audits, archival workloads) stays fast. Field arithmetic runs on
gmpy2 integers when that package is importable, plain ints otherwise.

Nonces are derived deterministically from the private key and message hash,
so identical inputs always produce identical signatures.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass

from .streebog import streebog512

try:
    from gmpy2 import invert as _gmpy_invert
    from gmpy2 import mpz as _mpz
except ImportError:  # pure-stdlib fallback
    _mpz = None
    _gmpy_invert = None

Point = tuple[int, int]
JPoint = "tuple[int, int, int] | None"  # Jacobian; None = point at infinity

COORD_BYTES = 64
PUBLIC_KEY_BYTES = 2 * COORD_BYTES
SIGNATURE_BYTES = 2 * COORD_BYTES

# 512-bit test parameter set published with the signature standard.
CURVE_ID = "gost3410-2012-512-test"
P = 0x4531ACD1FE0023C7550D267B6B2FEE80922B14B2FFB90F04D4EB7C09B5D2D15DF1D852741AF4704A0458047E80E4546D35B8336FAC224DD81664BBF528BE6373
A = 7
B = 0x1CFF0806A31116DA29D8CFA54E57EB748BC5F377E49400FDD788B649ECA1AC4361834013B2AD7322480A89CA58E0CF74BC9E540C2ADD6897FAD0A3084F302ADC
Q = 0x4531ACD1FE0023C7550D267B6B2FEE80922B14B2FFB90F04D4EB7C09B5D2D15DA82F2D7ECB1DBAC719905C5EECC423F1D86E25EDBE23C595D644AAF187E6E6DF
GX = 0x24D19CC64572EE30F396BF6EBBFD7A6C5213B3B3D7057CC825F91093A68CD762FD60611262CD838DC6B60AA7EEE804E28BC849977FAC33B4B530F1B120248A9A
GY = 0x2BB312A43BD2CE6E0D020613C857ACDDCFBF061E91E5F2C3F32447C259F39B2C83AB156D77F1496BF7EB3351E1EE4E43DC1A18B91B24640B6DBB92CB1ADD371E

if _mpz is not None:
    _P, _A, _Q = _mpz(P), _mpz(A), _mpz(Q)

    def _inv(value, modulus):
        return _gmpy_invert(value, modulus)

else:
    _P, _A, _Q = P, A, Q

    def _inv(value, modulus):
        return pow(value, -1, modulus)


def _jdbl(pt: JPoint) -> JPoint:
    if pt is None:
        return None
    x1, y1, z1 = pt
    if y1 == 0:
        return None
    yy = y1 * y1 % _P
    s = 4 * x1 * yy % _P
    zz = z1 * z1 % _P
    m = (3 * x1 * x1 + _A * zz * zz) % _P
    x3 = (m * m - 2 * s) % _P
    y3 = (m * (s - x3) - 8 * yy * yy) % _P
    z3 = 2 * y1 * z1 % _P
    return (x3, y3, z3)


def _jadd(p1: JPoint, p2: JPoint) -> JPoint:
    if p1 is None:
        return p2
    if p2 is None:
        return p1
    x1, y1, z1 = p1
    x2, y2, z2 = p2
    z1z1 = z1 * z1 % _P
    z2z2 = z2 * z2 % _P
    u1 = x1 * z2z2 % _P
    u2 = x2 * z1z1 % _P
    s1 = y1 * z2 % _P * z2z2 % _P
    s2 = y2 * z1 % _P * z1z1 % _P
    if u1 == u2:
        if s1 != s2:
            return None
        return _jdbl(p1)
    h = (u2 - u1) % _P
    r = (s2 - s1) % _P
    h2 = h * h % _P
    h3 = h * h2 % _P
    x3 = (r * r - h3 - 2 * u1 * h2) % _P
    y3 = (r * (u1 * h2 - x3) - s1 * h3) % _P
    z3 = z1 * z2 % _P * h % _P
    return (x3, y3, z3)


def _to_affine(pt: JPoint) -> Point | None:
    if pt is None:
        return None
    x, y, z = pt
    zi = _inv(z, _P)
    zi2 = zi * zi % _P
    return (int(x * zi2 % _P), int(y * zi2 % _P * zi % _P))


def _jmul_binary(k: int, pt: JPoint) -> JPoint:
    acc: JPoint = None
    q = pt
    while k:
        if k & 1:
            acc = _jadd(acc, q)
        q = _jdbl(q)
        k >>= 1
    return acc


_WINDOW = 4
_NUM_WINDOWS = (512 + _WINDOW - 1) // _WINDOW


def _build_window_table(point: Point) -> list[list[JPoint]]:
    # table[i][d] = d * 16^i * point, so a scalar multiply is one add per
    # nonzero 4-bit window and no doublings at all.
    table: list[list[JPoint]] = []
    base: JPoint = (_one * point[0], _one * point[1], _one)
    for _ in range(_NUM_WINDOWS):
        row: list[JPoint] = [None]
        acc: JPoint = None
        for _d in range(15):
            acc = _jadd(acc, base)
            row.append(acc)
        table.append(row)
        for _s in range(_WINDOW):
            base = _jdbl(base)
    return table


_one = _mpz(1) if _mpz is not None else 1


def _table_mul(k: int, table: list[list[JPoint]]) -> JPoint:
    acc: JPoint = None
    i = 0
    while k:
        d = k & 15
        if d:
            acc = _jadd(acc, table[i][d])
        k >>= 4
        i += 1
    return acc


_base_table: list[list[JPoint]] | None = None
_base_lock = threading.Lock()


def _base_mul(k: int) -> JPoint:
    global _base_table
    if _base_table is None:
        with _base_lock:
            if _base_table is None:
                _base_table = _build_window_table((GX, GY))
    return _table_mul(k, _base_table)


# Public keys seen this many times get a window table of their own; one-shot
# verifications stay on the cheap odd-multiples path.
_PROMOTE_AFTER = 3
_pub_cache_lock = threading.Lock()
_pub_use_counts: dict[Point, int] = {}
_pub_tables: dict[Point, list[list[JPoint]]] = {}
_PUB_TABLE_LIMIT = 32


def _pub_mul(k: int, point: Point) -> JPoint:
    with _pub_cache_lock:
        table = _pub_tables.get(point)
        if table is None:
            count = _pub_use_counts.get(point, 0) + 1
            _pub_use_counts[point] = count
            if count >= _PROMOTE_AFTER and len(_pub_tables) < _PUB_TABLE_LIMIT:
                table = _build_window_table(point)
                _pub_tables[point] = table
    if table is not None:
        return _table_mul(k, table)
    return _wnaf_mul(k, point)


def _wnaf_mul(k: int, point: Point) -> JPoint:
    # width-4 NAF with on-the-fly odd multiples 1P..7P
    jp: JPoint = (_one * point[0], _one * point[1], _one)
    dbl = _jdbl(jp)
    odd: list[JPoint] = [jp]
    for _ in range(3):
        odd.append(_jadd(odd[-1], dbl))
    digits: list[int] = []
    while k:
        if k & 1:
            d = k & 15
            if d > 8:
                d -= 16
            k -= d
        else:
            d = 0
        digits.append(d)
        k >>= 1
    acc: JPoint = None
    for d in reversed(digits):
        acc = _jdbl(acc)
        if d > 0:
            acc = _jadd(acc, odd[d >> 1])
        elif d < 0:
            x, y, z = odd[(-d) >> 1]  # type: ignore[misc]
            acc = _jadd(acc, (x, _P - y, z))
    return acc


def on_curve(x: int, y: int) -> bool:
    return (y * y - (x * x * x + _A * x + B)) % _P == 0


@dataclass(frozen=True)
class EcScheme:
    """Signature scheme instance; stateless apart from the shared caches."""

    scheme_id: str = CURVE_ID

    def derive_private(self, entropy: bytes) -> int:
        seed = streebog512(entropy)
        return int.from_bytes(seed, "big") % (Q - 1) + 1

    def public_point(self, private: int) -> Point:
        pt = _to_affine(_base_mul(private))
        assert pt is not None
        return pt

    def _message_scalar(self, message: bytes) -> int:
        e = int.from_bytes(streebog512(message), "big") % Q
        return e or 1

    def _nonce(self, private: int, e: int) -> int:
        counter = 0
        priv = private.to_bytes(COORD_BYTES, "big")
        ebytes = e.to_bytes(COORD_BYTES, "big")
        while True:
            k = int.from_bytes(
                streebog512(priv + ebytes + counter.to_bytes(4, "big")), "big"
            ) % Q
            if k != 0:
                return k
            counter += 1

    def sign(self, private: int, message: bytes) -> bytes:
        if not 0 < private < Q:
            raise InvalidKey("private key out of range")
        e = self._message_scalar(message)
        counter_bump = 0
        while True:
            k = self._nonce(private, e + counter_bump)
            c = _to_affine(_base_mul(k))
            if c is None:
                counter_bump += 1
                continue
            r = c[0] % Q
            if r == 0:
                counter_bump += 1
                continue
            s = int((r * private + k * e) % Q)
            if s == 0:
                counter_bump += 1
                continue
            return r.to_bytes(COORD_BYTES, "big") + s.to_bytes(COORD_BYTES, "big")

    def verify(self, public: bytes, message: bytes, signature: bytes) -> bool:
        if len(public) != PUBLIC_KEY_BYTES or len(signature) != SIGNATURE_BYTES:
            return False
        x = int.from_bytes(public[:COORD_BYTES], "big")
        y = int.from_bytes(public[COORD_BYTES:], "big")
        if not on_curve(x, y):
            return False
        r = int.from_bytes(signature[:COORD_BYTES], "big")
        s = int.from_bytes(signature[COORD_BYTES:], "big")
        if not (0 < r < Q and 0 < s < Q):
            return False
        e = self._message_scalar(message)
        v = _inv(e, _Q)
        z1 = int(s * v % _Q)
        z2 = int(-r * v % _Q)
        c = _to_affine(_jadd(_base_mul(z1), _pub_mul(z2, (x, y))))
        if c is None:
            return False
        return c[0] % Q == r

    def self_test(self) -> None:
        """Check the curve parameters and one sign/verify roundtrip."""
        if not on_curve(GX, GY):
            raise RuntimeError("base point not on curve")
        if _base_mul(Q) is not None:
            raise RuntimeError("base point order mismatch")
        private = self.derive_private(b"\x42" * 64)
        pub = self.public_point(private)
        pub_bytes = pub[0].to_bytes(COORD_BYTES, "big") + pub[1].to_bytes(
            COORD_BYTES, "big"
        )
        sig = self.sign(private, b"self-test")
        if not self.verify(pub_bytes, b"self-test", sig):
            raise RuntimeError("sign/verify roundtrip failed")


class InvalidKey(ValueError):
    """Key material rejected by the signature scheme."""
