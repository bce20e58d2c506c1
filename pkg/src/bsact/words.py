"""Words and normal forms in the Baumslag-Solitar group BS(m,n) = <b,t | t b^m t^-1 = b^n>.

Elements are manipulated in two shapes:

- ``Word``: a run-length encoded string of syllables (generator, exponent),
  convenient for parsing, printing and evaluation in pre-actions.
- ``NormalForm``: the unique reduced shape b^{k_1} t^{e_1} ... b^{k_d} t^{e_d} b^k
  where each k_i is a coset representative (0 <= k_i < |n| before t, and
  0 <= k_i < |m| before t^-1) and no pinch t^e b^0 t^-e remains.

Reduction is the usual HNN rewriting driven by the relation: b^{nj} t = t b^{mj}
and b^{mj} t^-1 = t^-1 b^{nj}, applied left to right with coset-representative
carrying, plus cancellation of pinches t b^{mj} t^-1 -> b^{nj} and
t^-1 b^{nj} t -> b^{mj}.

Parameters with negative m or n are allowed (|m|, |n| >= 2); coset
representatives are always taken in {0, ..., |n|-1} and {0, ..., |m|-1},
and the rewriting uses the relation verbatim with signed exponents.

Exponents are arbitrary-precision: repeated maximal transfers make orbit
lengths, hence carried exponents, exceed 64 bits quickly.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from functools import lru_cache

import sympy


class WordSyntaxError(ValueError):
    """Raised when a word string does not match the accepted grammar."""


@dataclass(frozen=True)
class GroupParams:
    """The parameter pair (m, n) of BS(m,n), with |m|, |n| >= 2."""

    m: int
    n: int
    m_factors: dict[int, int] = field(init=False, repr=False, compare=False)
    n_factors: dict[int, int] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if abs(self.m) < 2 or abs(self.n) < 2:
            raise ValueError(f"need |m| >= 2 and |n| >= 2, got (m, n) = ({self.m}, {self.n})")
        object.__setattr__(self, "m_factors", dict(sympy.factorint(abs(self.m))))
        object.__setattr__(self, "n_factors", dict(sympy.factorint(abs(self.n))))

    @property
    def abs_m(self) -> int:
        return abs(self.m)

    @property
    def abs_n(self) -> int:
        return abs(self.n)

    def mn_primes(self) -> list[int]:
        """Primes dividing m*n, ascending."""
        return sorted(set(self.m_factors) | set(self.n_factors))


def valuation(p: int, value: int) -> int:
    """Largest e with p^e dividing value, for p prime and value >= 1."""
    if value < 1:
        raise ValueError(f"valuation needs a positive integer, got {value}")
    if not sympy.isprime(p):
        raise ValueError(f"valuation needs a prime, got {p}")
    e = 0
    while value % p == 0:
        value //= p
        e += 1
    return e


@dataclass(frozen=True)
class Word:
    """Run-length encoded word on generators b, t: ((gen, exp), ...), exp != 0.

    Adjacent syllables carry distinct generators.
    """

    syllables: tuple[tuple[str, int], ...] = ()

    def __post_init__(self):
        prev = None
        for gen, exp in self.syllables:
            if gen not in ("b", "t"):
                raise ValueError(f"unknown generator {gen!r}")
            if exp == 0:
                raise ValueError("zero exponent syllable")
            if gen == prev:
                raise ValueError("adjacent syllables with equal generator")
            prev = gen

    def __mul__(self, other: "Word") -> "Word":
        return Word(_merge_syllables(self.syllables + other.syllables))

    def inverse(self) -> "Word":
        return Word(tuple((gen, -exp) for gen, exp in reversed(self.syllables)))

    def letters(self) -> int:
        """Total letter count, counting b^3 as three letters."""
        return sum(abs(exp) for _, exp in self.syllables)

    def t_length(self) -> int:
        """Number of t^{+-1} letters (the Bass-Serre tree path length)."""
        return sum(abs(exp) for gen, exp in self.syllables if gen == "t")

    def __str__(self) -> str:
        return format_word(self)


def _merge_syllables(sylls) -> tuple[tuple[str, int], ...]:
    out: list[tuple[str, int]] = []
    for gen, exp in sylls:
        if exp == 0:
            continue
        if out and out[-1][0] == gen:
            merged = out[-1][1] + exp
            out.pop()
            if merged:
                out.append((gen, merged))
        else:
            out.append((gen, exp))
    return tuple(out)


def word(*sylls: tuple[str, int]) -> Word:
    """Build a Word from syllables, merging runs and dropping zeros."""
    return Word(_merge_syllables(sylls))


_TOKEN = re.compile(r"\s*\*?\s*([btBT])(?:\^(-?\d+))?")


def parse_word(text: str) -> Word:
    """Parse ``("b"|"t"|"B"|"T")+`` with optional ``^k`` exponents and ``*`` separators.

    ``B`` and ``T`` denote inverse generators; an explicit exponent on an
    uppercase letter is negated, so ``B^2`` means b^-2.
    """
    text = text.strip()
    if text in ("", "e", "1"):
        return Word()
    sylls: list[tuple[str, int]] = []
    pos = 0
    while pos < len(text):
        match = _TOKEN.match(text, pos)
        if not match:
            raise WordSyntaxError(f"bad word syntax at {text[pos:]!r}")
        letter, exp_text = match.groups()
        exp = int(exp_text) if exp_text is not None else 1
        if letter in ("B", "T"):
            exp = -exp
        if exp:
            sylls.append((letter.lower(), exp))
        pos = match.end()
    return Word(_merge_syllables(sylls))


def format_word(w: Word) -> str:
    """Compact rendering, e.g. ``b^2*t*b^-1``. Identity prints as ``e``."""
    if not w.syllables:
        return "e"
    parts = []
    for gen, exp in w.syllables:
        parts.append(gen if exp == 1 else f"{gen}^{exp}")
    return "*".join(parts)


@dataclass(frozen=True)
class NormalForm:
    """Britton-reduced element b^{k_1} t^{e_1} ... b^{k_d} t^{e_d} b^{tail}.

    ``syllables`` lists (k_i, e_i) with e_i in {+1, -1}; the representative
    ranges and the no-pinch condition are re-checked at construction against
    the supplied parameters.
    """

    params: GroupParams
    syllables: tuple[tuple[int, int], ...] = ()
    tail: int = 0

    def __post_init__(self):
        bound = {1: self.params.abs_n, -1: self.params.abs_m}
        prev_sign = None
        for k, sign in self.syllables:
            if sign not in (1, -1):
                raise ValueError(f"bad t-sign {sign}")
            if not 0 <= k < bound[sign]:
                raise ValueError(f"coset representative {k} out of range for sign {sign}")
            if prev_sign is not None and sign == -prev_sign and k == 0:
                raise ValueError("pinch t^e b^0 t^-e in normal form")
            prev_sign = sign

    @property
    def depth(self) -> int:
        """The number d of t-letters."""
        return len(self.syllables)

    def is_identity(self) -> bool:
        return not self.syllables and self.tail == 0

    def to_word(self) -> Word:
        sylls: list[tuple[str, int]] = []
        for k, sign in self.syllables:
            if k:
                sylls.append(("b", k))
            sylls.append(("t", sign))
        if self.tail:
            sylls.append(("b", self.tail))
        # zero representatives between same-sign t letters leave adjacent t runs
        return Word(_merge_syllables(sylls))

    def last_t_sign(self) -> int | None:
        return self.syllables[-1][1] if self.syllables else None

    def __str__(self) -> str:
        return format_word(self.to_word())


def identity(params: GroupParams) -> NormalForm:
    return NormalForm(params)


class _Reducer:
    """Mutable Britton-reduction state: a syllable stack plus a trailing b-power."""

    __slots__ = ("params", "stack", "tail")

    def __init__(self, params: GroupParams):
        self.params = params
        self.stack: list[tuple[int, int]] = []
        self.tail = 0

    def push_b(self, exp: int) -> None:
        self.tail += exp

    def push_t(self, sign: int) -> None:
        # Carrying across t uses b^{nj} t = t b^{mj}; across t^-1 it uses
        # b^{mj} t^-1 = t^-1 b^{nj}.  A pinch cancels the top of the stack.
        m, n = self.params.m, self.params.n
        if sign == 1:
            if self.stack and self.stack[-1][1] == -1 and self.tail % n == 0:
                k_prev, _ = self.stack.pop()
                self.tail = k_prev + m * (self.tail // n)
                return
            rep = self.tail % abs(n)
            carry = (self.tail - rep) // n
            self.stack.append((rep, 1))
            self.tail = m * carry
        else:
            if self.stack and self.stack[-1][1] == 1 and self.tail % m == 0:
                k_prev, _ = self.stack.pop()
                self.tail = k_prev + n * (self.tail // m)
                return
            rep = self.tail % abs(m)
            carry = (self.tail - rep) // m
            self.stack.append((rep, -1))
            self.tail = n * carry

    def push_word(self, w: Word) -> None:
        for gen, exp in w.syllables:
            if gen == "b":
                self.push_b(exp)
            else:
                step = 1 if exp > 0 else -1
                for _ in range(abs(exp)):
                    self.push_t(step)

    def snapshot(self) -> NormalForm:
        return NormalForm(self.params, tuple(self.stack), self.tail)


def britton_reduce(params: GroupParams, w: Word) -> NormalForm:
    """Normal form of the element represented by ``w``."""
    reducer = _Reducer(params)
    reducer.push_word(w)
    return reducer.snapshot()


def multiply(params: GroupParams, u: NormalForm, v: NormalForm) -> NormalForm:
    reducer = _Reducer(params)
    reducer.stack = list(u.syllables)
    reducer.tail = u.tail
    reducer.push_word(v.to_word())
    return reducer.snapshot()


def invert(u: NormalForm) -> NormalForm:
    return britton_reduce(u.params, u.to_word().inverse())


def conjugate(params: GroupParams, g: NormalForm, h: NormalForm) -> NormalForm:
    """g h g^-1."""
    return multiply(params, multiply(params, g, h), invert(g))


@lru_cache(maxsize=None)
def params(m: int, n: int) -> GroupParams:
    """Cached GroupParams constructor (prime tables are reused)."""
    return GroupParams(m, n)
