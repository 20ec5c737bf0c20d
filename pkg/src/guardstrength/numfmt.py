from fractions import Fraction

DIGITS = 20


def decimal_str(v, digits: int = DIGITS) -> str:
    """Decimal expansion truncated toward zero, so it never overstates v."""
    if not isinstance(v, Fraction):
        if str(v) == "inf":
            return "inf"
        v = Fraction(v)
    sign = "-" if v < 0 else ""
    v = abs(v)
    whole, rem = divmod(v.numerator, v.denominator)
    frac = (rem * 10**digits) // v.denominator
    return f"{sign}{whole}.{frac:0{digits}d}"
