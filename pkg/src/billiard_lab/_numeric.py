"""Precision switching between plain floats and mpmath.

Hot paths run on ``math`` at 53 bits; anything wider goes through mpmath
with the global precision pinned by :func:`working_precision`.
"""
import math
import os
import sys
from contextlib import contextmanager

import gmpy2
import mpmath

DOUBLE_BITS = 53
# above this many bits sin/cos go through MPFR, which is a few times faster
MPFR_BITS = 4096

# deep orbits are stored as exact decimal strings of tens of thousands of digits
if hasattr(sys, "set_int_max_str_digits"):
    sys.set_int_max_str_digits(0)


def max_bits(default=4096):
    """Upper cap on precision escalation (``BILLIARD_LAB_MAX_BITS``)."""
    env = os.environ.get("BILLIARD_LAB_MAX_BITS")
    return int(env) if env else default


class FloatOps:
    bits = DOUBLE_BITS
    sqrt = staticmethod(math.sqrt)
    sin = staticmethod(math.sin)
    cos = staticmethod(math.cos)
    atan2 = staticmethod(math.atan2)
    acos = staticmethod(math.acos)
    log = staticmethod(math.log)
    exp = staticmethod(math.exp)
    fabs = staticmethod(math.fabs)
    floor = staticmethod(math.floor)
    pi = math.pi
    half_pi = math.pi / 2

    @staticmethod
    def num(x):
        return float(x)

    @staticmethod
    def cos_sin(x):
        return math.cos(x), math.sin(x)

    @staticmethod
    def eps():
        return 2.0 ** -52


class MpOps:
    """mpmath-backed operations; only valid inside ``working_precision``."""

    sqrt = staticmethod(mpmath.sqrt)
    sin = staticmethod(mpmath.sin)
    cos = staticmethod(mpmath.cos)
    atan2 = staticmethod(mpmath.atan2)
    acos = staticmethod(mpmath.acos)
    log = staticmethod(mpmath.log)
    exp = staticmethod(mpmath.exp)
    fabs = staticmethod(mpmath.fabs)
    floor = staticmethod(mpmath.floor)

    def __init__(self, bits):
        self.bits = bits
        self.pi = +mpmath.pi
        self.half_pi = self.pi / 2

    @staticmethod
    def num(x):
        if isinstance(x, str):
            return mpmath.mpf(x)
        return +mpmath.mpf(x)

    def eps(self):
        return mpmath.ldexp(1, 1 - self.bits)

    def cos_sin(self, x):
        if self.bits < MPFR_BITS:
            return mpmath.cos(x), mpmath.sin(x)
        with gmpy2.context(gmpy2.get_context(), precision=self.bits + 16):
            c, s = gmpy2.sin_cos(_to_mpfr(x))[::-1]
            return _from_mpfr(c), _from_mpfr(s)


def _to_mpfr(x):
    sign, man, exp, _ = x._mpf_
    v = gmpy2.mul_2exp(gmpy2.mpfr(man), exp)
    return -v if sign else v


def _from_mpfr(v):
    man, exp = v.as_mantissa_exp()
    return mpmath.mpf((man, int(exp)))


@contextmanager
def working_precision(bits):
    """Yield an ops namespace for ``bits`` of mantissa."""
    if bits <= DOUBLE_BITS:
        yield FloatOps
    else:
        with mpmath.workprec(bits):
            yield MpOps(bits)


def is_mp(x):
    return isinstance(x, mpmath.mpf)


def to_str(x, bits=None):
    """Decimal string carrying every significant digit of ``x``."""
    if isinstance(x, mpmath.mpf):
        dps = mpmath.libmp.prec_to_dps(bits or mpmath.mp.prec) + 2
        return mpmath.libmp.to_str(x._mpf_, dps)
    return repr(float(x))
