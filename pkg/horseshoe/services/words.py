"""
Provenance Words

Every element of a rectangle class is named by the way it was built: a
chain of prime factors, each a transition letter a.b or a parabolic node
[left sign right] joining an element that ends in the unstable chart with
one that starts in the stable chart through the fold. Simple composition
concatenates chains, so a word is its own prime decomposition.

Text form: the start symbol, then ".b" per letter and "[left+right]e" per
parabolic node ending in symbol e, e.g. "2.2[2.2.2+1.1.1]1.2".
"""

from dataclasses import dataclass
from functools import cached_property
from typing import List, Optional, Tuple, Union


@dataclass(frozen=True)
class Letter:
    """One transition a -> b."""
    a: int
    b: int

    @property
    def start(self) -> int:
        return self.a

    @property
    def end(self) -> int:
        return self.b

    @property
    def n(self) -> int:
        return 1

    def render(self) -> str:
        return f".{self.b}"


@dataclass(frozen=True)
class Fold:
    """Parabolic node: left ends in the unstable chart, right starts in the stable chart."""
    left: "Word"
    sign: str
    right: "Word"
    n0: int

    def __post_init__(self):
        if self.sign not in ("+", "-"):
            raise ValueError(f"parabolic sign must be + or -, got {self.sign!r}")

    @property
    def start(self) -> int:
        return self.left.start

    @property
    def end(self) -> int:
        return self.right.end

    @property
    def n(self) -> int:
        return self.left.n + self.right.n + self.n0

    def render(self) -> str:
        return f"[{self.left.key}{self.sign}{self.right.key}]{self.end}"


Factor = Union[Letter, Fold]


@dataclass(frozen=True)
class Word:
    """A chain of prime factors starting in rectangle `start`."""
    start: int
    factors: Tuple[Factor, ...] = ()

    def __post_init__(self):
        at = self.start
        for f in self.factors:
            if f.start != at:
                raise ValueError(f"factor {f.render()} does not start at symbol {at}")
            at = f.end

    @property
    def end(self) -> int:
        return self.factors[-1].end if self.factors else self.start

    @cached_property
    def n(self) -> int:
        return sum(f.n for f in self.factors)

    @property
    def r(self) -> int:
        """Number of prime factors."""
        return len(self.factors)

    @cached_property
    def key(self) -> str:
        return str(self.start) + "".join(f.render() for f in self.factors)

    @property
    def is_pure(self) -> bool:
        return all(isinstance(f, Letter) for f in self.factors)

    @property
    def is_parabolic_prime(self) -> bool:
        return len(self.factors) == 1 and isinstance(self.factors[0], Fold)

    @property
    def symbols(self) -> Tuple[int, ...]:
        """Visited rectangles (pure words only)."""
        if not self.is_pure:
            raise ValueError(f"{self.key} is not a pure itinerary")
        return (self.start,) + tuple(f.b for f in self.factors)

    def sort_key(self) -> Tuple[int, str]:
        return self.n, self.key

    def join(self, other: "Word") -> "Word":
        """Simple composition: follow self, then other."""
        if self.end != other.start:
            raise ValueError(f"cannot join {self.key} and {other.key}: {self.end} != {other.start}")
        return Word(self.start, self.factors + other.factors)

    def primes(self) -> List["Word"]:
        """The prime factors as one-factor words, left to right."""
        return [Word(f.start, (f,)) for f in self.factors]

    def parent(self) -> Optional["Word"]:
        """
        Word of the thinnest element whose P contains this one's: drop the
        last letter, or replace a trailing parabolic node by its left word.
        """
        if not self.factors:
            return None
        head = Word(self.start, self.factors[:-1])
        last = self.factors[-1]
        return head if isinstance(last, Letter) else head.join(last.left)

    def q_parent(self) -> Optional["Word"]:
        """Time-reversed parent: the thinnest element whose Q contains this one's."""
        if not self.factors:
            return None
        first = self.factors[0]
        tail = Word(first.end, self.factors[1:])
        return tail if isinstance(first, Letter) else first.right.join(tail)

    def is_simple_child_of(self, other: "Word") -> bool:
        return self.parent() == other and isinstance(self.factors[-1], Letter)

    def __str__(self) -> str:
        return self.key


def pure_word(symbols) -> Word:
    symbols = [int(s) for s in symbols]
    return Word(symbols[0], tuple(Letter(a, b) for a, b in zip(symbols, symbols[1:])))


def letter_word(a: int, b: int) -> Word:
    return Word(a, (Letter(a, b),))


def fold_word(left: Word, sign: str, right: Word, n0: int) -> Word:
    node = Fold(left, sign, right, n0)
    return Word(node.start, (node,))


class _Parser:
    def __init__(self, text: str, n0: int):
        self.text = text
        self.n0 = n0
        self.i = 0

    def _symbol(self) -> int:
        j = self.i
        while j < len(self.text) and self.text[j].isdigit():
            j += 1
        if j == self.i:
            raise ValueError(f"expected a symbol at position {self.i} of {self.text!r}")
        value, self.i = int(self.text[self.i:j]), j
        return value

    def _expect(self, char: str):
        if self.i >= len(self.text) or self.text[self.i] != char:
            raise ValueError(f"expected {char!r} at position {self.i} of {self.text!r}")
        self.i += 1

    def word(self) -> Word:
        start = at = self._symbol()
        factors = []
        while self.i < len(self.text) and self.text[self.i] in ".[":
            if self.text[self.i] == ".":
                self.i += 1
                b = self._symbol()
                factors.append(Letter(at, b))
                at = b
            else:
                self.i += 1
                left = self.word()
                sign = self.text[self.i] if self.i < len(self.text) else ""
                if sign not in ("+", "-"):
                    raise ValueError(f"expected a parabolic sign at position {self.i} of {self.text!r}")
                self.i += 1
                right = self.word()
                self._expect("]")
                end = self._symbol()
                node = Fold(left, sign, right, self.n0)
                if node.end != end or node.start != at:
                    raise ValueError(f"parabolic node {node.render()} does not fit at position {self.i}")
                factors.append(node)
                at = end
        return Word(start, tuple(factors))


def parse_word(text: str, n0: int = 2) -> Word:
    """Inverse of Word.key."""
    parser = _Parser(text.strip(), n0)
    word = parser.word()
    if parser.i != len(parser.text):
        raise ValueError(f"trailing characters in word {text!r}")
    return word
