"""Exact arithmetic in truncated Witt rings W_N(F_{p^m}).

Elements are coefficient tuples over Z/p^N modulo a fixed monic irreducible
modulus; the Frobenius lift is computed once per ring by Newton iteration from
x^p.  On top of the ring sit 2x2 matrices and rank-2 lattices with a Hermite
canonical form, which together form the substrate of the Dieudonne simulator.

Precision policy: every ring carries a budget of N - RESERVE trusted p-adic
digits.  Operations that would need valuations at or beyond the budget raise
instead of silently truncating.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import lru_cache

from sympy import GF, Poly, isprime
from sympy.abc import x as _x

RESERVE = 4

WElem = tuple  # coefficient tuple of length m over Z/p^N
Mat2 = tuple  # ((a, b), (c, d)) row-major over WElem


class WittError(ValueError):
    """Raised for out-of-range parameters or exhausted precision."""


class NotSplit:
    """Marker: elementary divisors indistinguishable within the budget."""

    def __repr__(self) -> str:  # pragma: no cover - cosmetic
        return "NotSplit"


NOT_SPLIT = NotSplit()


def _smallest_irreducible(p: int, m: int) -> tuple[int, ...]:
    """Little-endian coefficients of the first monic irreducible of degree m."""
    for k in itertools.count():
        digits, val = [], k
        for _ in range(m):
            digits.append(val % p)
            val //= p
        if val:
            raise WittError(f"no irreducible polynomial found for p={p}, m={m}")
        coeffs = digits + [1]
        poly = Poly(list(reversed(coeffs)), _x, domain=GF(p))
        if poly.is_irreducible:
            return tuple(coeffs)


def _poly_mul_mod(a, b, modulus, q):
    """Product of coefficient tuples modulo (monic modulus, q)."""
    m = len(modulus) - 1
    prod = [0] * max(2 * m - 1, 1)
    for i, ai in enumerate(a):
        if ai:
            for j, bj in enumerate(b):
                prod[i + j] = (prod[i + j] + ai * bj) % q
    for d in range(len(prod) - 1, m - 1, -1):
        c = prod[d]
        if c:
            prod[d] = 0
            for j in range(m):
                prod[d - m + j] = (prod[d - m + j] - c * modulus[j]) % q
    return tuple(prod[:m])


def _poly_pow_mod(a, k, modulus, q):
    m = len(modulus) - 1
    result = (1,) + (0,) * (m - 1)
    base = a
    while k:
        if k & 1:
            result = _poly_mul_mod(result, base, modulus, q)
        base = _poly_mul_mod(base, base, modulus, q)
        k >>= 1
    return result


@dataclass(frozen=True)
class WittRing:
    p: int
    m: int
    N: int
    modulus: tuple[int, ...]
    frob_image: WElem

    @property
    def pn(self) -> int:
        return self.p**self.N

    @property
    def budget(self) -> int:
        return self.N - RESERVE

    # --- element arithmetic -------------------------------------------------

    def zero(self) -> WElem:
        return (0,) * self.m

    def one(self) -> WElem:
        return self.from_int(1)

    def from_int(self, k: int) -> WElem:
        return (k % self.pn,) + (0,) * (self.m - 1)

    def gen(self) -> WElem:
        """The image of x (zero when m = 1)."""
        if self.m == 1:
            return (0,)
        return (0, 1) + (0,) * (self.m - 2)

    def add(self, a: WElem, b: WElem) -> WElem:
        return tuple((u + v) % self.pn for u, v in zip(a, b))

    def sub(self, a: WElem, b: WElem) -> WElem:
        return tuple((u - v) % self.pn for u, v in zip(a, b))

    def neg(self, a: WElem) -> WElem:
        return tuple(-u % self.pn for u in a)

    def mul(self, a: WElem, b: WElem) -> WElem:
        return _poly_mul_mod(a, b, self.modulus, self.pn)

    def smul(self, k: int, a: WElem) -> WElem:
        return tuple(k * u % self.pn for u in a)

    def val(self, a: WElem) -> int:
        """p-adic valuation, capped at N."""
        best = self.N
        for c in a:
            if c:
                v = 0
                while c % self.p == 0:
                    c //= self.p
                    v += 1
                best = min(best, v)
        return best

    def div_p(self, a: WElem, k: int) -> WElem:
        """Exact division by p^k; requires valuation at least k."""
        if self.val(a) < k:
            raise WittError("element not divisible by the requested power of p")
        q = self.p**k
        return tuple(c // q for c in a)

    def unit_and_val(self, a: WElem) -> tuple[int, WElem]:
        v = self.val(a)
        if v >= self.N:
            raise WittError("element indistinguishable from zero")
        return v, self.div_p(a, v)

    def inv(self, a: WElem) -> WElem:
        """Inverse of a unit, by Hensel lifting the residue-field inverse."""
        if self.val(a) != 0:
            raise WittError("not a unit")
        bar = tuple(c % self.p for c in a)
        v = _poly_pow_mod(bar, self.p**self.m - 2, self.modulus, self.p)
        two = self.from_int(2)
        for _ in range(self.N.bit_length() + 1):
            v = self.mul(v, self.sub(two, self.mul(a, v)))
        if self.mul(a, v) != self.one():
            raise WittError("inversion failed")
        return v

    def eval_poly(self, coeffs, y: WElem) -> WElem:
        """Evaluate an integer-coefficient polynomial (little-endian) at y."""
        acc = self.zero()
        for c in reversed(coeffs):
            acc = self.add(self.mul(acc, y), self.from_int(c))
        return acc


def witt_ring(p: int, m: int, N: int) -> WittRing:
    """The truncated Witt ring W_N(F_{p^m}) with its canonical modulus."""
    if not isprime(p):
        raise WittError(f"p = {p} is not prime")
    if m < 1:
        raise WittError(f"m = {m} must be at least 1")
    if N < 2:
        raise WittError(f"N = {N} must be at least 2")
    modulus = _smallest_irreducible(p, m)
    ring = WittRing(p, m, N, modulus, (0,) * m)
    # Newton iteration for the root of the modulus congruent to x^p mod p.
    xbar = tuple(c % p for c in ring.gen())
    y = tuple(c % ring.pn for c in _poly_pow_mod(xbar, p, modulus, p))
    deriv = [i * c for i, c in enumerate(modulus)][1:]
    for _ in range(2 * N):
        g = ring.eval_poly(modulus, y)
        if g == ring.zero():
            break
        y = ring.sub(y, ring.mul(g, ring.inv(ring.eval_poly(deriv, y))))
    else:
        raise WittError("Frobenius lift did not converge")
    return WittRing(p, m, N, modulus, y)


@lru_cache(maxsize=None)
def _frob_powers(ring: WittRing) -> tuple[WElem, ...]:
    powers = [ring.one()]
    for _ in range(ring.m - 1):
        powers.append(ring.mul(powers[-1], ring.frob_image))
    return tuple(powers)


def frobenius(ring: WittRing, a: WElem, k: int = 1) -> WElem:
    """k-fold application of the Frobenius lift x -> frob_image."""
    powers = _frob_powers(ring)
    for _ in range(k % ring.m):
        acc = ring.zero()
        for coeff, power in zip(a, powers):
            acc = ring.add(acc, ring.smul(coeff, power))
        a = acc
    return a


# --- 2x2 matrices ------------------------------------------------------------


def mat2(ring: WittRing, entries) -> Mat2:
    """Build a matrix from a 2x2 array of integers or ring elements."""
    rows = []
    for row in entries:
        rows.append(
            tuple(e if isinstance(e, tuple) else ring.from_int(e) for e in row)
        )
    return tuple(rows)


def mat_identity(ring: WittRing) -> Mat2:
    return mat2(ring, [[1, 0], [0, 1]])


def mat_add(ring: WittRing, a: Mat2, b: Mat2) -> Mat2:
    return tuple(
        tuple(ring.add(u, v) for u, v in zip(ra, rb)) for ra, rb in zip(a, b)
    )


def mat_mul(ring: WittRing, a: Mat2, b: Mat2) -> Mat2:
    return tuple(
        tuple(
            ring.add(ring.mul(a[i][0], b[0][j]), ring.mul(a[i][1], b[1][j]))
            for j in range(2)
        )
        for i in range(2)
    )


def mat_apply(ring: WittRing, a: Mat2, v) -> tuple:
    return tuple(
        ring.add(ring.mul(a[i][0], v[0]), ring.mul(a[i][1], v[1]))
        for i in range(2)
    )


def mat_smul(ring: WittRing, k: int, a: Mat2) -> Mat2:
    return tuple(tuple(ring.smul(k, e) for e in row) for row in a)


def mat_elem_mul(ring: WittRing, e: WElem, a: Mat2) -> Mat2:
    return tuple(tuple(ring.mul(e, entry) for entry in row) for row in a)


def mat_neg(ring: WittRing, a: Mat2) -> Mat2:
    return tuple(tuple(ring.neg(e) for e in row) for row in a)


def mat_transpose(a: Mat2) -> Mat2:
    return ((a[0][0], a[1][0]), (a[0][1], a[1][1]))


def mat_sigma(ring: WittRing, a: Mat2, k: int = 1) -> Mat2:
    return tuple(tuple(frobenius(ring, e, k) for e in row) for row in a)


def mat_det(ring: WittRing, a: Mat2) -> WElem:
    return ring.sub(ring.mul(a[0][0], a[1][1]), ring.mul(a[0][1], a[1][0]))


def mat_val(ring: WittRing, a: Mat2) -> int:
    return min(ring.val(e) for row in a for e in row)


def mat_adjugate(ring: WittRing, a: Mat2) -> Mat2:
    return (
        (a[1][1], ring.neg(a[0][1])),
        (ring.neg(a[1][0]), a[0][0]),
    )


def scaled_inverse(ring: WittRing, a: Mat2, k: int) -> Mat2:
    """The matrix p^k * a^{-1}, which must be integral."""
    d, unit = ring.unit_and_val(mat_det(ring, a))
    if d > k:
        raise WittError("scaled inverse is not integral")
    adj = mat_elem_mul(ring, ring.inv(unit), mat_adjugate(ring, a))
    return mat_smul(ring, ring.p ** (k - d), adj)


def elementary_divisors(ring: WittRing, a: Mat2):
    """Valuations (v1, v2) with v1 <= v2, or NOT_SPLIT beyond the budget."""
    v1 = mat_val(ring, a)
    if v1 >= ring.budget:
        return NOT_SPLIT
    v2 = ring.val(mat_det(ring, a)) - v1
    if v2 >= ring.budget:
        return NOT_SPLIT
    return (v1, v2)


# --- rank-2 lattices ----------------------------------------------------------


@dataclass(frozen=True)
class Lattice2:
    """p^shift times the column span of basis inside the standard module."""

    ring: WittRing
    shift: int
    basis: Mat2


def standard_lattice(ring: WittRing) -> Lattice2:
    return Lattice2(ring, 0, mat_identity(ring))


def _hnf(ring: WittRing, shift: int, cols: list) -> Lattice2:
    """Canonical form [[p^a, 0], [c, p^b]] with min elementary divisor zero."""
    if ring.budget <= 0:
        raise WittError("precision budget exhausted")
    vmin = min(ring.val(e) for col in cols for e in col)
    if vmin >= ring.N:
        raise WittError("degenerate lattice generators")
    if vmin > 0:
        cols = [tuple(ring.div_p(e, vmin) for e in col) for col in cols]
        shift += vmin
    # top pivot: column whose first coordinate has minimal valuation
    a = min(ring.val(col[0]) for col in cols)
    if a >= ring.budget:
        raise WittError("precision budget exhausted")
    j = next(i for i, col in enumerate(cols) if ring.val(col[0]) == a)
    _, unit = ring.unit_and_val(cols[j][0])
    inv = ring.inv(unit)
    pivot = (ring.from_int(ring.p**a), ring.mul(inv, cols[j][1]))
    bottoms = []
    for i, col in enumerate(cols):
        if i == j:
            continue
        t = ring.div_p(col[0], a)
        bottoms.append(ring.sub(col[1], ring.mul(t, pivot[1])))
    b = min(ring.val(e) for e in bottoms)
    if b >= ring.budget:
        raise WittError("precision budget exhausted")
    c = pivot[1]
    q = ring.p**b
    c = tuple(e % q for e in c)
    return Lattice2(
        ring,
        shift,
        ((ring.from_int(ring.p**a), ring.zero()), (c, ring.from_int(q))),
    )


def lattice_normalize(l: Lattice2) -> Lattice2:
    cols = [(l.basis[0][0], l.basis[1][0]), (l.basis[0][1], l.basis[1][1])]
    return _hnf(l.ring, l.shift, cols)


def lattice_equal(a: Lattice2, b: Lattice2) -> bool:
    if a.ring != b.ring:
        raise WittError("lattices live over different rings")
    na, nb = lattice_normalize(a), lattice_normalize(b)
    return na.shift == nb.shift and na.basis == nb.basis


def lattice_scale(l: Lattice2, k: int) -> Lattice2:
    return Lattice2(l.ring, l.shift + k, l.basis)


def lattice_sum(a: Lattice2, b: Lattice2) -> Lattice2:
    if a.ring != b.ring:
        raise WittError("lattices live over different rings")
    ring = a.ring
    shift = min(a.shift, b.shift)
    cols = []
    for l in (a, b):
        scale = ring.p ** (l.shift - shift)
        for j in range(2):
            cols.append(
                (ring.smul(scale, l.basis[0][j]), ring.smul(scale, l.basis[1][j]))
            )
    return _hnf(ring, shift, cols)


def lattice_transform(l: Lattice2, mat: Mat2, shift: int = 0) -> Lattice2:
    """The image lattice p^shift * mat(l)."""
    return lattice_normalize(
        Lattice2(l.ring, l.shift + shift, mat_mul(l.ring, mat, l.basis))
    )


def lattice_index_val(l: Lattice2) -> int:
    """Valuation of the index in the standard lattice (may be negative)."""
    return 2 * l.shift + l.ring.val(mat_det(l.ring, l.basis))


def lattice_contains(outer: Lattice2, inner: Lattice2) -> bool:
    ring = outer.ring
    d = ring.val(mat_det(ring, outer.basis))
    change = scaled_inverse(ring, outer.basis, d)
    image = mat_mul(ring, change, inner.basis)
    need = d - (inner.shift - outer.shift)
    return need <= 0 or mat_val(ring, image) >= need


def lattice_colength(outer: Lattice2, inner: Lattice2) -> int:
    if not lattice_contains(outer, inner):
        raise WittError("lattice is not contained in the claimed overlattice")
    return lattice_index_val(inner) - lattice_index_val(outer)


def lattice_dual(l: Lattice2, pairing: Mat2) -> Lattice2:
    """{v : <v, l> integral} under <v, w> = v^T * pairing * w."""
    ring = l.ring
    mat = mat_mul(ring, mat_transpose(l.basis), mat_transpose(pairing))
    d = ring.val(mat_det(ring, mat))
    if d >= ring.N:
        raise WittError("pairing degenerate beyond the declared valuation")
    basis = scaled_inverse(ring, mat, d)
    return lattice_normalize(Lattice2(ring, -l.shift - d, basis))


# --- serialization ------------------------------------------------------------


def ring_to_json(ring: WittRing) -> dict:
    return {
        "p": ring.p,
        "m": ring.m,
        "N": ring.N,
        "modulus": [c % ring.p for c in ring.modulus],
    }


def ring_from_json(data: dict) -> WittRing:
    ring = witt_ring(int(data["p"]), int(data["m"]), int(data["N"]))
    if "modulus" in data:
        given = [c % ring.p for c in data["modulus"]]
        if given != [c % ring.p for c in ring.modulus]:
            raise WittError("modulus mismatch with the canonical choice")
    return ring
