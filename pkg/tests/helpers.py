"""Shared program builders and closed-form oracles for the tests."""

from fractions import Fraction

from guardstrength.parser import parse_expectation, parse_program
from guardstrength.strengthen import apply_strengthening, make_box_strengthening
from guardstrength.syntax import grid

BRW = "while (0 < n) { {n := n - 1} [1/3] {n := n + 1} }"


def brw(M=None):
    loop = parse_program(BRW)
    if M is None:
        return loop
    return apply_strengthening(loop, make_box_strengthening(loop.guard, [("n", "<", M)]))


def l_brw(M):
    return parse_expectation("[n<0] + [0<=n<=M] * ((1/2)^n monus (1/2)^M)", {"M": M})


def ruin(n, M, down=Fraction(1, 3)):
    """P(hit 0 before M) from n for a walk stepping down with probability `down`."""
    r = down / (1 - down)
    if r == 1:
        return Fraction(M - n, M)
    return (r**n - r**M) / (1 - r**M)


def ns(lo, hi, var="n"):
    return grid(**{var: range(lo, hi + 1)})
