"""Small arithmetic and formatting helpers."""

from fractions import Fraction


def ceil_div(a: int, b: int) -> int:
    return -(-a // b)


def ceil_log2(n: int) -> int:
    if n < 1:
        raise ValueError("ceil_log2 requires n >= 1")
    return (n - 1).bit_length()


def decimal_str(value, places: int = 4) -> str:
    """Render a rational as a decimal string, rounded to `places` and trimmed.

    Deterministic (round-half-even), so reports built from it are byte-stable.
    """
    value = Fraction(value)
    scale = 10 ** places
    q = round(value * scale)
    sign = "-" if q < 0 else ""
    whole, frac = divmod(abs(q), scale)
    if frac:
        digits = f"{frac:0{places}d}".rstrip("0")
        return f"{sign}{whole}.{digits}"
    return f"{sign}{whole}"


def fixed_decimal_str(value, places: int = 3) -> str:
    """Render a rational with a fixed number of decimal places."""
    value = Fraction(value)
    scale = 10 ** places
    q = round(value * scale)
    sign = "-" if q < 0 else ""
    whole, frac = divmod(abs(q), scale)
    return f"{sign}{whole}.{frac:0{places}d}"
