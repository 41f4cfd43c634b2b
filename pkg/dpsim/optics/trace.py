"""
Sequential ray tracing through rotationally symmetric surfaces.

Coordinates are in mm with light travelling toward +z and the first surface
vertex at z=0.  Everything here works on whole bundles of rays at once; the
single-ray functions are thin wrappers.
"""
from __future__ import annotations

import logging
from typing import Optional, Tuple

import numpy as np

from dpsim.optics.types import (
    BundleOutcome,
    LensPrescription,
    MissReason,
    Ray,
    SurfaceSpec,
    SurfaceKind,
    TraceOutcome,
)

logger = logging.getLogger(__name__)

NEWTON_TOLERANCE = 1e-10  # mm
NEWTON_MAXITER = 50
NEWTON_STEP_BOUND = 1.0  # mm; damping for the first few steps


def _sag_terms(surface: SurfaceSpec, r2: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """
    Returns the sag z(r) and the slope factor g(r) = (dz/dr)/r for squared
    radial heights r2.  Points outside the conic's domain come back as NaN
    """
    c = surface.curvature
    k = surface.conic
    a4, a6, a8, a10, a12 = surface.asphere_coeffs

    arg = 1.0 - (1.0 + k) * c * c * r2
    with np.errstate(invalid="ignore"):
        root = np.sqrt(np.where(arg >= 0, arg, np.nan))
        sag = c * r2 / (1.0 + root)
        g = c / root

    # even polynomial terms, Horner-style in r2
    sag = sag + r2 * r2 * (a4 + r2 * (a6 + r2 * (a8 + r2 * (a10 + r2 * a12))))
    g = g + r2 * (4 * a4 + r2 * (6 * a6 + r2 * (8 * a8 + r2 * (10 * a10 + r2 * 12 * a12))))
    return sag, g


def surface_sag(surface: SurfaceSpec, h: float) -> float:
    """
    Returns the axial sag of a surface at radial height h (mm), relative to its
    vertex.  Planar surfaces, the stop and the sensor always return 0.

    :raises ValueError: if |h| is past the semi-diameter, or outside the domain
                        of the sag formula
    """
    if surface.kind != SurfaceKind.sensor and abs(h) > surface.semi_diameter:
        raise ValueError(f"height {h} mm is past the {surface.semi_diameter:g} mm semi-diameter of {surface}")
    if surface.kind in (SurfaceKind.stop, SurfaceKind.sensor) or surface.is_planar:
        return 0.0

    sag, _ = _sag_terms(surface, np.asarray(h * h, dtype=float))
    if np.isnan(sag):
        raise ValueError(f"height {h} mm is outside the domain of {surface}")
    return float(sag)


def refract_many(
    d: np.ndarray, normal: np.ndarray, n1: float, n2: float,
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Vector form of Snell's law for (N, 3) arrays of unit directions and unit
    normals.  The normal may point either way.

    :returns: the refracted directions, and a mask of rays that were totally
              internally reflected (their directions are NaN)
    """
    mu = n1 / n2
    cosi = np.sum(d * normal, axis=-1)
    flip = cosi < 0
    normal = np.where(flip[..., None], -normal, normal)
    cosi = np.abs(cosi)

    k = 1.0 - mu * mu * (1.0 - cosi * cosi)
    tir = k < 0
    with np.errstate(invalid="ignore"):
        out = mu * d + (np.sqrt(np.where(tir, np.nan, k)) - mu * cosi)[..., None] * normal
    return out, tir


def refract(dir, normal, n1: float, n2: float) -> Optional[np.ndarray]:
    """
    Refracts a single unit direction at a surface with the given unit normal,
    going from index n1 into index n2.

    :returns: the refracted unit direction, or None on total internal reflection
    """
    out, tir = refract_many(
        np.asarray(dir, dtype=float)[None, :],
        np.asarray(normal, dtype=float)[None, :],
        n1, n2,
    )
    if tir[0]:
        return None
    return out[0]


def _intersect_closed(surface: SurfaceSpec, p: np.ndarray, d: np.ndarray) -> np.ndarray:
    """
    Distance along each ray to a sphere or plane whose vertex sits at the local
    origin.  NaN where the ray misses the sphere
    """
    c = surface.curvature
    F = c * np.sum(p * p, axis=-1) - 2.0 * p[:, 2]
    G = d[:, 2] - c * np.sum(p * d, axis=-1)
    disc = G * G - c * F
    with np.errstate(invalid="ignore", divide="ignore"):
        denom = G + np.sqrt(np.where(disc >= 0, disc, np.nan))
        t = F / np.where(denom > 0, denom, np.nan)
    return t


def _intersect_newton(surface: SurfaceSpec, p: np.ndarray, d: np.ndarray) -> np.ndarray:
    """
    Distance along each ray to a conic/aspheric surface, found by damped Newton
    iteration from the vertex plane.  NaN where the iteration does not converge
    """
    t = -p[:, 2] / d[:, 2]
    done = np.zeros(len(t), dtype=bool)

    for _ in range(NEWTON_MAXITER):
        active = ~done
        if not active.any():
            break
        q = p[active] + t[active, None] * d[active]
        r2 = q[:, 0] ** 2 + q[:, 1] ** 2
        sag, g = _sag_terms(surface, r2)
        f = q[:, 2] - sag
        df = d[active, 2] - g * (q[:, 0] * d[active, 0] + q[:, 1] * d[active, 1])

        converged = np.abs(f) < NEWTON_TOLERANCE
        with np.errstate(invalid="ignore", divide="ignore"):
            step = np.clip(f / df, -NEWTON_STEP_BOUND, NEWTON_STEP_BOUND)
        step = np.where(converged, 0.0, step)

        idx = np.nonzero(active)[0]
        t[idx] = t[idx] - step
        done[idx[converged]] = True
        # NaNs never converge; stop iterating them
        dead = ~np.isfinite(t[idx])
        done[idx[dead]] = True
        t[idx[dead]] = np.nan

    t[~done] = np.nan
    return t


def _surface_normals(surface: SurfaceSpec, q: np.ndarray) -> np.ndarray:
    """
    Unit normals (pointing toward +z) at points q on a surface in local
    coordinates
    """
    if surface.is_planar:
        n = np.zeros_like(q)
        n[:, 2] = 1.0
        return n

    _, g = _sag_terms(surface, q[:, 0] ** 2 + q[:, 1] ** 2)
    n = np.stack([-q[:, 0] * g, -q[:, 1] * g, np.ones(len(q))], axis=-1)
    return n / np.sqrt(np.sum(n * n, axis=-1))[:, None]


def trace_bundle(
    lens: LensPrescription, origins: np.ndarray, directions: np.ndarray,
) -> BundleOutcome:
    """
    Traces N rays, given as (N, 3) origins in object space and (N, 3) unit
    directions, through every surface of the lens to the sensor plane
    """
    p = np.array(origins, dtype=float, copy=True).reshape(-1, 3)
    d = np.array(directions, dtype=float, copy=True).reshape(-1, 3)
    reason = np.zeros(len(p), dtype=np.int8)

    n1 = 1.0
    for i, surface in enumerate(lens.optical_surfaces):
        idx = np.nonzero(reason == MissReason.none)[0]
        if len(idx) == 0:
            break

        z_v = lens.vertex_z[i]
        local = p[idx] - np.array([0.0, 0.0, z_v])
        dl = d[idx]

        if surface.needs_iteration:
            t = _intersect_newton(surface, local, dl)
        else:
            t = _intersect_closed(surface, local, dl)

        missed = ~np.isfinite(t)
        reason[idx[missed]] = MissReason.no_intersection

        q = local + np.where(missed, 0.0, t)[:, None] * dl
        clipped = ~missed & (q[:, 0] ** 2 + q[:, 1] ** 2 > surface.semi_diameter ** 2)
        reason[idx[clipped]] = MissReason.aperture_clip

        ok = ~(missed | clipped)
        idx, q, dl = idx[ok], q[ok], dl[ok]
        p[idx] = q + np.array([0.0, 0.0, z_v])

        n2 = surface.index_after
        if n2 != n1:
            out, tir = refract_many(dl, _surface_normals(surface, q), n1, n2)
            reason[idx[tir]] = MissReason.total_internal_reflection
            backwards = ~tir & ~(out[:, 2] > 0)
            reason[idx[backwards]] = MissReason.diverged
            good = ~(tir | backwards)
            d[idx[good]] = out[good]
        n1 = n2

    landing = np.full((len(p), 2), np.nan)
    direction = np.full((len(p), 3), np.nan)
    idx = np.nonzero(reason == MissReason.none)[0]
    t = (lens.sensor_z - p[idx, 2]) / d[idx, 2]
    landing[idx] = p[idx, :2] + t[:, None] * d[idx, :2]
    direction[idx] = d[idx]

    logger.debug("traced %d rays, %d landed", len(p), len(idx))
    return BundleOutcome(landing=landing, direction=direction, miss_reason=reason)


def trace_ray(lens: LensPrescription, ray: Ray) -> TraceOutcome:
    """
    Traces one ray through the lens to the sensor plane
    """
    bundle = trace_bundle(
        lens,
        np.asarray(ray.origin, dtype=float)[None, :],
        np.asarray(ray.direction, dtype=float)[None, :],
    )
    return bundle.outcome(0)
