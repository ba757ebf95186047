"""Colour maps, including the default cool-warm diverging map.

The diverging map interpolates between two saturated endpoints in Msh
space (the polar form of CIELAB: magnitude, saturation angle, hue) and
passes through an unsaturated midpoint, following K. Moreland, "Diverging
Color Maps for Scientific Visualization" (ISVC 2009).
"""
from __future__ import annotations

import math

from .errors import DomainError, UnknownColormapError

DEFAULT_COLORMAP = "coolwarm-diverging"

COOL = (0.230, 0.299, 0.754)
WARM = (0.706, 0.016, 0.150)
MID_MAGNITUDE = 88.0

# D65 reference white, 2 degree observer
_WHITE = (0.95047, 1.00000, 1.08883)
_RGB2XYZ = (
    (0.4124564, 0.3575761, 0.1804375),
    (0.2126729, 0.7151522, 0.0721750),
    (0.0193339, 0.1191920, 0.9503041),
)
_XYZ2RGB = (
    (3.2404542, -1.5371385, -0.4985314),
    (-0.9692660, 1.8760108, 0.0415560),
    (0.0556434, -0.2040259, 1.0572252),
)
_DELTA = 6.0 / 29.0


def _to_linear(c):
    return c / 12.92 if c <= 0.04045 else ((c + 0.055) / 1.055) ** 2.4


def _to_srgb(c):
    return 12.92 * c if c <= 0.0031308 else 1.055 * c ** (1.0 / 2.4) - 0.055


def _matmul(m, v):
    return tuple(r[0] * v[0] + r[1] * v[1] + r[2] * v[2] for r in m)


def _f(t):
    return t ** (1.0 / 3.0) if t > _DELTA ** 3 else t / (3 * _DELTA ** 2) + 4.0 / 29.0


def _finv(t):
    return t ** 3 if t > _DELTA else 3 * _DELTA ** 2 * (t - 4.0 / 29.0)


def srgb_to_lab(rgb):
    x, y, z = _matmul(_RGB2XYZ, [_to_linear(c) for c in rgb])
    fx, fy, fz = _f(x / _WHITE[0]), _f(y / _WHITE[1]), _f(z / _WHITE[2])
    return 116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz)


def lab_to_srgb(lab):
    L, a, b = lab
    fy = (L + 16.0) / 116.0
    xyz = (
        _WHITE[0] * _finv(fy + a / 500.0),
        _WHITE[1] * _finv(fy),
        _WHITE[2] * _finv(fy - b / 200.0),
    )
    return tuple(min(1.0, max(0.0, _to_srgb(c))) for c in _matmul(_XYZ2RGB, xyz))


def lab_to_msh(lab):
    L, a, b = lab
    m = math.sqrt(L * L + a * a + b * b)
    s = math.acos(L / m) if m > 0 else 0.0
    h = math.atan2(b, a)
    return m, s, h


def msh_to_lab(msh):
    m, s, h = msh
    return m * math.cos(s), m * math.sin(s) * math.cos(h), m * math.sin(s) * math.sin(h)


def srgb_to_msh(rgb):
    return lab_to_msh(srgb_to_lab(rgb))


def msh_to_srgb(msh):
    return lab_to_srgb(msh_to_lab(msh))


def _adjust_hue(sat, m_unsat):
    """Hue for an unsaturated colour next to the saturated ``sat`` (avoids a hue kink)."""
    m, s, h = sat
    if m >= m_unsat:
        return h
    spin = s * math.sqrt(m_unsat ** 2 - m ** 2) / (m * math.sin(s))
    return h + spin if h > -math.pi / 3 else h - spin


def _hue_gap(h1, h2):
    d = abs(h1 - h2) % (2 * math.pi)
    return min(d, 2 * math.pi - d)


def interpolate_msh(low, high, t):
    """Msh coordinates at fraction ``t`` between the sRGB colours ``low`` and ``high``."""
    m1, s1, h1 = srgb_to_msh(low)
    m2, s2, h2 = srgb_to_msh(high)
    if s1 > 0.05 and s2 > 0.05 and _hue_gap(h1, h2) > math.pi / 3:
        mid = max(m1, m2, MID_MAGNITUDE)
        if t < 0.5:
            m2, s2, h2 = mid, 0.0, 0.0
            t = 2 * t
        else:
            m1, s1, h1 = mid, 0.0, 0.0
            t = 2 * t - 1
    if s1 < 0.05 < s2:
        h1 = _adjust_hue((m2, s2, h2), m1)
    elif s2 < 0.05 < s1:
        h2 = _adjust_hue((m1, s1, h1), m2)
    return (
        (1 - t) * m1 + t * m2,
        (1 - t) * s1 + t * s2,
        (1 - t) * h1 + t * h2,
    )


def _coolwarm(t):
    return msh_to_srgb(interpolate_msh(COOL, WARM, t))


def _grey(t):
    return (t, t, t)


COLORMAPS = {
    DEFAULT_COLORMAP: _coolwarm,
    "grey": _grey,
}


def colormap_eval(colormap_id: str, t: float) -> tuple[float, float, float]:
    try:
        fn = COLORMAPS[colormap_id]
    except KeyError:
        raise UnknownColormapError(
            f"unknown colormap {colormap_id!r}; known: {', '.join(sorted(COLORMAPS))}"
        ) from None
    t = float(t)
    if not 0.0 <= t <= 1.0:
        raise DomainError(f"colormap position {t} outside [0, 1]")
    return fn(t)


def to_hex(rgb) -> str:
    return "#" + "".join(f"{round(c * 255):02x}" for c in rgb)
