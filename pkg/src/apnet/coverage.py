"""Coverage layer: Voronoi partition, importance density, centroidal control.

Mobile sensors partition a rectangular domain, weight their cells by a
time-varying density that grows where the estimated target moves slowly,
and each solves a small minimum-norm program driving it toward its cell
centroid. Quadrature is a midpoint rule on the density grid with cell
membership by nearest-site ownership, so every integral can be checked by
brute force.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class DegenerateSites(ValueError):
    """All sensors coincident beyond the perturbation budget."""


_COINCIDENT_EPS = 1e-9
_PERTURB = 1e-6
_MASS_FLOOR = 1e-12
_FD_STEP = 1e-3  # meters, centroid sensitivity probe


@dataclass(frozen=True)
class Domain2D:
    """Axis-aligned rectangle with a square density grid (cells per axis)."""

    x_lo: float
    x_hi: float
    y_lo: float
    y_hi: float
    grid_resolution: int

    def __post_init__(self):
        if self.x_hi <= self.x_lo or self.y_hi <= self.y_lo:
            raise ValueError("empty domain rectangle")
        if self.grid_resolution < 16:
            raise ValueError("grid_resolution must be at least 16")
        res = self.grid_resolution
        xs = self.x_lo + (np.arange(res) + 0.5) * self.dx
        ys = self.y_lo + (np.arange(res) + 0.5) * self.dy
        gx, gy = np.meshgrid(xs, ys)  # row index is y
        object.__setattr__(self, "_xs", xs)
        object.__setattr__(self, "_ys", ys)
        object.__setattr__(self, "_points", np.column_stack([gx.ravel(), gy.ravel()]))

    @property
    def dx(self) -> float:
        return (self.x_hi - self.x_lo) / self.grid_resolution

    @property
    def dy(self) -> float:
        return (self.y_hi - self.y_lo) / self.grid_resolution

    @property
    def cell_area(self) -> float:
        return self.dx * self.dy

    @property
    def grid_points(self) -> np.ndarray:
        """Midpoints of all grid cells, shape (res^2, 2), x varying fastest."""
        return self._points

    @property
    def area(self) -> float:
        return (self.x_hi - self.x_lo) * (self.y_hi - self.y_lo)

    def corners(self) -> np.ndarray:
        return np.array(
            [
                [self.x_lo, self.y_lo],
                [self.x_hi, self.y_lo],
                [self.x_hi, self.y_hi],
                [self.x_lo, self.y_hi],
            ]
        )

    def clamp(self, points: np.ndarray) -> np.ndarray:
        out = np.array(points, dtype=float, copy=True)
        out[..., 0] = np.clip(out[..., 0], self.x_lo, self.x_hi)
        out[..., 1] = np.clip(out[..., 1], self.y_lo, self.y_hi)
        return out

    def contains(self, point) -> bool:
        x, y = point
        return self.x_lo <= x <= self.x_hi and self.y_lo <= y <= self.y_hi


@dataclass
class DensityField:
    """Nonnegative importance grid over the domain.

    Deposition spreads the speed-driven growth rate through a unit-peak
    cosine bump of radius bump_radius at the estimated target; decay and a
    cap keep the field bounded.
    """

    domain: Domain2D
    bump_radius: float
    decay: float
    phi_max: float
    phi: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.bump_radius <= 0:
            raise ValueError("bump_radius must be positive")
        if self.decay < 0 or self.phi_max <= 0:
            raise ValueError("decay must be >= 0 and phi_max > 0")
        res = self.domain.grid_resolution
        if self.phi is None:
            self.phi = np.zeros((res, res))
        else:
            self.phi = np.asarray(self.phi, dtype=float).reshape(res, res).copy()

    @property
    def flat(self) -> np.ndarray:
        return self.phi.ravel()

    def total_mass(self) -> float:
        return float(self.phi.sum()) * self.domain.cell_area


def radial_bump(points: np.ndarray, center, radius: float) -> np.ndarray:
    """Unit-peak cosine taper: 1 at the center, 0 from `radius` outward."""
    d = np.linalg.norm(points - np.asarray(center, dtype=float), axis=-1)
    out = np.zeros_like(d)
    inside = d < radius
    out[inside] = 0.5 * (1.0 + np.cos(np.pi * d[inside] / radius))
    return out


def density_step(fld: DensityField, target_position, target_speed: float, dt: float) -> DensityField:
    """Deposit importance at the estimated target and decay the rest.

    phi <- phi + dt * bump / (|speed| + 0.1) - dt * decay * phi,
    clamped to [0, phi_max]. Growth is strongest where the target lingers.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    rate = 1.0 / (abs(float(target_speed)) + 0.1)
    bump = radial_bump(fld.domain.grid_points, target_position, fld.bump_radius)
    fld.phi += dt * rate * bump.reshape(fld.phi.shape)
    if fld.decay > 0:
        fld.phi -= dt * fld.decay * fld.phi
    np.clip(fld.phi, 0.0, fld.phi_max, out=fld.phi)
    return fld


@dataclass(frozen=True)
class VoronoiPartition:
    """Nearest-site partition: ownership over the grid plus clipped cell polygons.

    Polygons are built lazily on first access; the hot loop only needs the
    ownership grid.
    """

    sites: np.ndarray
    owner: np.ndarray  # (res^2,) index of the nearest site per grid point
    domain: Domain2D

    def cell_mask(self, i: int) -> np.ndarray:
        return self.owner == i

    @property
    def polygons(self) -> tuple:
        cached = getattr(self, "_polygons", None)
        if cached is None:
            cached = tuple(
                _clip_cell(self.sites, i, self.domain) for i in range(self.sites.shape[0])
            )
            object.__setattr__(self, "_polygons", cached)
        return cached

    @property
    def neighbor_pairs(self) -> frozenset:
        cached = getattr(self, "_neighbor_pairs", None)
        if cached is None:
            res = self.domain.grid_resolution
            grid_owner = self.owner.reshape(res, res)
            pairs = set()
            horiz = grid_owner[:, :-1] != grid_owner[:, 1:]
            vert = grid_owner[:-1, :] != grid_owner[1:, :]
            for a, b in zip(grid_owner[:, :-1][horiz], grid_owner[:, 1:][horiz]):
                pairs.add((min(a, b), max(a, b)))
            for a, b in zip(grid_owner[:-1, :][vert], grid_owner[1:, :][vert]):
                pairs.add((min(a, b), max(a, b)))
            cached = frozenset(pairs)
            object.__setattr__(self, "_neighbor_pairs", cached)
        return cached


def voronoi_partition(positions, domain: Domain2D) -> VoronoiPartition:
    """Partition the domain among sensors by nearest site.

    Coincident sensors get a deterministic index-keyed micro-perturbation
    before tessellation; ties at bisectors go to the lower index.
    """
    sites = np.asarray(positions, dtype=float).reshape(-1, 2).copy()
    n = sites.shape[0]
    if n == 0:
        raise ValueError("need at least one sensor")
    sites = _separate_coincident(sites)

    pts = domain.grid_points
    d2 = ((pts[:, None, :] - sites[None, :, :]) ** 2).sum(axis=2)
    owner = np.argmin(d2, axis=1)

    return VoronoiPartition(sites=sites, owner=owner, domain=domain)


def _separate_coincident(sites: np.ndarray) -> np.ndarray:
    n = sites.shape[0]
    if n == 1:
        return sites
    for i in range(n):
        clash = np.any(
            np.linalg.norm(sites[:i] - sites[i], axis=1) < _COINCIDENT_EPS
        ) if i else False
        if clash:
            angle = 2.0 * np.pi * i / n
            sites[i] = sites[i] + _PERTURB * np.array([np.cos(angle), np.sin(angle)])
    dists = np.linalg.norm(sites[:, None, :] - sites[None, :, :], axis=2)
    np.fill_diagonal(dists, np.inf)
    if np.any(dists < 1e-12):
        raise DegenerateSites("sensors remain coincident after perturbation")
    return sites


def _clip_cell(sites: np.ndarray, i: int, domain: Domain2D) -> np.ndarray:
    poly = domain.corners()
    for j in range(sites.shape[0]):
        if j == i or poly.shape[0] == 0:
            continue
        normal = sites[i] - sites[j]
        mid = 0.5 * (sites[i] + sites[j])
        poly = _clip_halfplane(poly, mid, normal)
    return poly


def _clip_halfplane(poly: np.ndarray, point: np.ndarray, normal: np.ndarray) -> np.ndarray:
    """Sutherland-Hodgman: keep vertices with (q - point) . normal >= 0."""
    if poly.shape[0] == 0:
        return poly
    side = (poly - point) @ normal
    out = []
    m = poly.shape[0]
    for k in range(m):
        k2 = (k + 1) % m
        a, b = poly[k], poly[k2]
        sa, sb = side[k], side[k2]
        if sa >= 0:
            out.append(a)
        if (sa >= 0) != (sb >= 0):
            t = sa / (sa - sb)
            out.append(a + t * (b - a))
    return np.asarray(out) if out else np.empty((0, 2))


def polygon_area_centroid(poly: np.ndarray) -> tuple[float, np.ndarray]:
    """Shoelace area and centroid of a simple polygon."""
    x, y = poly[:, 0], poly[:, 1]
    xn, yn = np.roll(x, -1), np.roll(y, -1)
    cross = x * yn - xn * y
    area = 0.5 * cross.sum()
    if abs(area) < 1e-15:
        return 0.0, poly.mean(axis=0)
    cx = ((x + xn) * cross).sum() / (6.0 * area)
    cy = ((y + yn) * cross).sum() / (6.0 * area)
    return float(area), np.array([cx, cy])


def cell_centroid(partition: VoronoiPartition, i: int, fld: DensityField) -> tuple[np.ndarray, float]:
    """Density-weighted center of mass of cell i, with its mass.

    Near-zero mass falls back to the cell polygon's geometric centroid
    (the weighted mean is 0/0 there).
    """
    mask = partition.cell_mask(i)
    w = fld.flat[mask]
    mass = float(w.sum()) * fld.domain.cell_area
    if mass < _MASS_FLOOR:
        poly = partition.polygons[i]
        if poly.shape[0] >= 3:
            return polygon_area_centroid(poly)[1], mass
        return partition.sites[i].copy(), mass
    pts = fld.domain.grid_points[mask]
    centroid = (pts * w[:, None]).sum(axis=0) / w.sum()
    return centroid, mass


def all_centroids(partition: VoronoiPartition, fld: DensityField) -> tuple[np.ndarray, np.ndarray]:
    """Centroids and masses of every cell in one pass over the grid."""
    n = partition.sites.shape[0]
    w = fld.flat
    mass_sum = np.bincount(partition.owner, weights=w, minlength=n)
    gx = np.bincount(partition.owner, weights=w * fld.domain.grid_points[:, 0], minlength=n)
    gy = np.bincount(partition.owner, weights=w * fld.domain.grid_points[:, 1], minlength=n)
    centroids = np.empty((n, 2))
    masses = mass_sum * fld.domain.cell_area
    for i in range(n):
        if masses[i] < _MASS_FLOOR:
            poly = partition.polygons[i]
            if poly.shape[0] >= 3:
                centroids[i] = polygon_area_centroid(poly)[1]
            else:
                centroids[i] = partition.sites[i]
        else:
            centroids[i] = np.array([gx[i], gy[i]]) / mass_sum[i]
    return centroids, masses


def coverage_cost(positions: np.ndarray, partition: VoronoiPartition, fld: DensityField) -> float:
    """Locational cost: sum_i of the phi-weighted squared distance over cell i."""
    pts = fld.domain.grid_points
    d2 = ((pts - positions[partition.owner]) ** 2).sum(axis=1)
    return float((d2 * fld.flat).sum()) * fld.domain.cell_area


def centroid_cost(positions: np.ndarray, centroids: np.ndarray) -> float:
    """J = sum_i 0.5 ||O_i - G_i||^2; zero exactly at a centroidal configuration."""
    if positions.shape != centroids.shape:
        raise ValueError("positions and centroids must match in shape")
    return 0.5 * float(((positions - centroids) ** 2).sum())


def coverage_control(
    o_i: np.ndarray,
    g_i: np.ndarray,
    dg_doi: np.ndarray,
    dg_dt: np.ndarray,
    j_i: float,
    kappa: float,
) -> tuple[np.ndarray, float]:
    """Minimum-norm control meeting the centroid-tracking decrease condition.

    min ||U||^2 + r^2  s.t.  a.U + r >= b,
    a = -(I - dG/dO)^T (O - G),  b = kappa J_i - (O - G) . dG/dt.
    Inactive constraint (b <= 0) returns zeros; otherwise the KKT point is
    (a, 1) * b / (||a||^2 + 1) and meets the constraint with equality.
    """
    if kappa <= 0:
        raise ValueError("kappa must be positive")
    diff = np.asarray(o_i, dtype=float) - np.asarray(g_i, dtype=float)
    a = -(np.eye(2) - np.asarray(dg_doi, dtype=float)).T @ diff
    b = kappa * float(j_i) - float(diff @ np.asarray(dg_dt, dtype=float))
    if b <= 0:
        return np.zeros(2), 0.0
    scale = b / (float(a @ a) + 1.0)
    return a * scale, scale


def constraint_slack(u, r, a, b) -> float:
    """a.U + r - b; nonnegative when the returned pair is feasible."""
    return float(np.asarray(a) @ np.asarray(u)) + float(r) - float(b)


@dataclass
class SensorFleet:
    """Sensor positions and the most recent velocity commands."""

    positions: np.ndarray
    speed_limit: float
    velocities: np.ndarray = field(default=None)

    def __post_init__(self):
        self.positions = np.asarray(self.positions, dtype=float).reshape(-1, 2).copy()
        if self.speed_limit <= 0:
            raise ValueError("speed_limit must be positive")
        if self.velocities is None:
            self.velocities = np.zeros_like(self.positions)


@dataclass(frozen=True)
class CoverageParams:
    grid_resolution: int
    bump_radius: float
    decay: float
    phi_max: float
    kappa: float
    speed_limit: float
    dgdo_mode: str = "zero"  # "fd" probes dG/dO by central differences

    def __post_init__(self):
        if self.dgdo_mode not in ("fd", "zero"):
            raise ValueError("dgdo_mode must be 'fd' or 'zero'")


def centroid_position_jacobian(
    positions: np.ndarray, i: int, fld: DensityField, step: float | None = None
) -> np.ndarray:
    """dG_i/dO_i by central differences, re-tessellating per probe.

    The grid-quadrature centroid is piecewise constant in the site position,
    so the probe must span at least one grid cell to register ownership
    changes; smaller steps read zero.
    """
    if step is None:
        step = max(fld.domain.dx, fld.domain.dy, _FD_STEP)
    jac = np.empty((2, 2))
    for axis in range(2):
        probes = []
        for sign in (1.0, -1.0):
            shifted = positions.copy()
            shifted[i, axis] += sign * step
            part = voronoi_partition(shifted, fld.domain)
            g, _ = cell_centroid(part, i, fld)
            probes.append(g)
        jac[:, axis] = (probes[0] - probes[1]) / (2.0 * step)
    return jac


def fleet_step(
    fleet: SensorFleet,
    fld: DensityField,
    params: CoverageParams,
    dt: float,
    prev_centroids: np.ndarray | None = None,
    prev_dt: float | None = None,
):
    """One coverage update: tessellate, locate centroids, solve per-sensor
    programs, integrate positions, clamp to the domain.

    dG/dt comes from a backward difference against prev_centroids (zero on
    the first call). Returns (partition, centroids, diagnostics dict).
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    n = fleet.positions.shape[0]
    partition = voronoi_partition(fleet.positions, fld.domain)
    centroids, masses = all_centroids(partition, fld)
    if prev_centroids is None:
        dg_dt = np.zeros((n, 2))
    else:
        dg_dt = (centroids - prev_centroids) / (prev_dt if prev_dt else dt)

    controls = np.empty((n, 2))
    slacks = np.empty(n)
    clamped = np.zeros(n, dtype=bool)
    for i in range(n):
        diff = fleet.positions[i] - centroids[i]
        j_i = 0.5 * float(diff @ diff)
        if params.dgdo_mode == "fd":
            jac = centroid_position_jacobian(fleet.positions, i, fld)
        else:
            jac = np.zeros((2, 2))
        u_i, r_i = coverage_control(fleet.positions[i], centroids[i], jac, dg_dt[i], j_i, params.kappa)
        a = -(np.eye(2) - jac).T @ diff
        b = params.kappa * j_i - float(diff @ dg_dt[i])
        slacks[i] = constraint_slack(u_i, r_i, a, b) if b > 0 else 0.0
        speed = float(np.linalg.norm(u_i))
        if speed > fleet.speed_limit:
            u_i = u_i * (fleet.speed_limit / speed)
            clamped[i] = True
        controls[i] = u_i

    fleet.velocities = controls
    fleet.positions = fld.domain.clamp(fleet.positions + dt * controls)
    diag = {
        "masses": masses,
        "slack_min": float(slacks.min()) if n else 0.0,
        "clamped": clamped,
    }
    return partition, centroids, diag
