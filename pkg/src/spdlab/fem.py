"""Steady heat conduction ``-div(kappa grad T) = f`` with linear simplices.

Triangles in 2D, tetrahedra in 3D. Dirichlet data are prescribed on named
boundary facet sets; flux sets receive a total power spread uniformly over
their measure. The heat flux is ``q = -kappa grad T``, constant per element.
"""
from dataclasses import dataclass, field
from math import factorial

import numpy as np
from scipy import linalg as sla
from scipy import sparse
from scipy.sparse import linalg as spla

from .errors import NumericalError
from .linalg import as_spd

DEGENERATE_TOL = 1e-14
RESIDUAL_TOL = 1e-10
DENSE_LIMIT = 3000


@dataclass(eq=False)
class Mesh:
    nodes: np.ndarray
    elements: np.ndarray
    boundary_sets: dict = field(default_factory=dict)

    def __post_init__(self):
        self.nodes = np.ascontiguousarray(self.nodes, dtype=float)
        self.elements = np.ascontiguousarray(self.elements, dtype=np.int64)
        if self.nodes.ndim != 2 or self.nodes.shape[1] not in (2, 3):
            raise ValueError("nodes must be an (n, 2) or (n, 3) array")
        d = self.d
        if self.elements.ndim != 2 or self.elements.shape[1] != d + 1:
            raise ValueError(f"elements must be an (m, {d + 1}) array")
        n = len(self.nodes)
        if self.elements.size and (self.elements.min() < 0 or self.elements.max() >= n):
            raise ValueError("element node index out of range")
        sets = {}
        for name, facets in self.boundary_sets.items():
            f = np.asarray(facets, dtype=np.int64).reshape(-1, d)
            if f.size and (f.min() < 0 or f.max() >= n):
                raise ValueError(f"boundary set {name!r}: node index out of range")
            sets[name] = f
        self.boundary_sets = sets
        self._check_elements()
        self._check_facets()

    @property
    def d(self):
        return self.nodes.shape[1]

    @property
    def n_nodes(self):
        return len(self.nodes)

    @property
    def n_elements(self):
        return len(self.elements)

    def _check_elements(self):
        x = self.nodes[self.elements]
        jac = x[:, 1:] - x[:, :1]
        det = np.linalg.det(jac)
        scale = np.ptp(self.nodes, axis=0).max() if len(self.nodes) else 1.0
        if np.any(det <= DEGENERATE_TOL * scale ** self.d):
            bad = int(np.argmin(det))
            if det[bad] < 0 and abs(det[bad]) > DEGENERATE_TOL * scale ** self.d:
                raise ValueError(f"element {bad} is negatively oriented")
            raise ValueError(f"element {bad} is degenerate")

    def _check_facets(self):
        faces = set()
        for el in self.elements:
            for k in range(self.d + 1):
                faces.add(tuple(sorted(np.delete(el, k).tolist())))
        for name, f in self.boundary_sets.items():
            for facet in f:
                if tuple(sorted(facet.tolist())) not in faces:
                    raise ValueError(f"boundary set {name!r}: {facet.tolist()} is not an element face")

    def set_nodes(self, name):
        if name not in self.boundary_sets:
            raise KeyError(f"mesh has no boundary set {name!r}")
        return np.unique(self.boundary_sets[name])

    def facet_measure(self, name):
        f = self.boundary_sets[name]
        x = self.nodes[f]
        if self.d == 2:
            return np.linalg.norm(x[:, 1] - x[:, 0], axis=1)
        return 0.5 * np.linalg.norm(np.cross(x[:, 1] - x[:, 0], x[:, 2] - x[:, 0]), axis=1)

    def transformed(self, rotation):
        """Copy of the mesh with every node mapped by ``x -> R x``."""
        return Mesh(self.nodes @ np.asarray(rotation).T, self.elements.copy(),
                    {k: v.copy() for k, v in self.boundary_sets.items()})


def element_geometry(mesh):
    """Barycentric gradients ``(m, d+1, d)`` and element measures ``(m,)``."""
    x = mesh.nodes[mesh.elements]
    jac = x[:, 1:] - x[:, :1]
    inv = np.linalg.inv(jac)
    g = np.empty((mesh.n_elements, mesh.d + 1, mesh.d))
    g[:, 1:] = np.swapaxes(inv, 1, 2)
    g[:, 0] = -g[:, 1:].sum(axis=1)
    meas = np.linalg.det(jac) / factorial(mesh.d)
    return g, meas


def element_stiffness(grads, meas, kappa):
    """``meas * G kappa G^T`` per element; ``kappa`` is ``(d, d)`` or ``(m, d, d)``."""
    return meas[:, None, None] * np.einsum("eia,...ab,ejb->eij", grads, kappa, grads)


@dataclass(frozen=True)
class BoundaryConditions:
    """Dirichlet temperatures and applied powers on named facet sets.

    A Dirichlet value may be a number or a callable ``g(x)`` of nodal
    coordinates ``(k, d)``. Flux values are total powers in W (W per unit
    depth for 2D meshes), positive into the body.
    """
    dirichlet: dict
    flux: dict = field(default_factory=dict)

    def validate(self, mesh):
        if not self.dirichlet:
            raise ValueError("at least one Dirichlet set is required")
        for name in list(self.dirichlet) + list(self.flux):
            if name not in mesh.boundary_sets:
                raise ValueError(f"mesh has no boundary set {name!r}")
        dfacets = {tuple(sorted(f)) for n in self.dirichlet for f in mesh.boundary_sets[n].tolist()}
        for name in self.flux:
            if name in self.dirichlet or any(
                    tuple(sorted(f)) in dfacets for f in mesh.boundary_sets[name].tolist()):
                raise ValueError(f"flux set {name!r} overlaps a Dirichlet set")
        if not any(len(mesh.boundary_sets[n]) for n in self.dirichlet):
            raise ValueError("Dirichlet sets contain no nodes")


def _dirichlet_values(mesh, bc):
    idx, vals = [], []
    for name, value in bc.dirichlet.items():
        nodes = mesh.set_nodes(name)
        v = value(mesh.nodes[nodes]) if callable(value) else np.full(len(nodes), float(value))
        idx.append(nodes)
        vals.append(np.asarray(v, dtype=float))
    idx = np.concatenate(idx)
    vals = np.concatenate(vals)
    order = np.argsort(idx, kind="stable")
    idx, vals = idx[order], vals[order]
    keep = np.r_[True, idx[1:] != idx[:-1]]
    return idx[keep], vals[keep]


# symmetric quadrature on the reference simplex (barycentric points, weights sum to 1)
_QUAD = {
    2: (np.array([[2 / 3, 1 / 6, 1 / 6], [1 / 6, 2 / 3, 1 / 6], [1 / 6, 1 / 6, 2 / 3]]),
        np.full(3, 1 / 3)),
    3: (np.array([[a, b, b, b], [b, a, b, b], [b, b, a, b], [b, b, b, a]])
        for a, b in [((5 + 3 * 5 ** 0.5) / 20, (5 - 5 ** 0.5) / 20)]),
}
_QUAD[3] = (next(_QUAD[3]), np.full(4, 0.25))


def load_vector(mesh, bc, source=0.0):
    """Nodal loads from the flux sets and a body source ``f`` (constant or callable)."""
    f = np.zeros(mesh.n_nodes)
    d = mesh.d
    for name, power in bc.flux.items():
        facets = mesh.boundary_sets[name]
        meas = mesh.facet_measure(name)
        total = meas.sum()
        if total <= 0:
            raise ValueError(f"flux set {name!r} has zero measure")
        np.add.at(f, facets, (float(power) / total * meas / d)[:, None])
    _, meas = element_geometry(mesh)
    if callable(source):
        bary, w = _QUAD[d]
        pts = np.einsum("qi,eid->eqd", bary, mesh.nodes[mesh.elements])
        vals = np.asarray(source(pts.reshape(-1, d))).reshape(len(meas), len(w))
        contrib = meas[:, None] * np.einsum("q,eq,qi->ei", w, vals, bary)
        np.add.at(f, mesh.elements, contrib)
    elif source != 0.0:
        np.add.at(f, mesh.elements, (float(source) * meas / (d + 1))[:, None])
    return f


@dataclass
class LinearSystem:
    mesh: Mesh
    stiffness: sparse.csr_matrix
    load: np.ndarray
    fixed: np.ndarray
    fixed_values: np.ndarray
    free: np.ndarray


def _global_matrix(mesh, ke):
    rows = np.repeat(mesh.elements, mesh.d + 1, axis=1).ravel()
    cols = np.tile(mesh.elements, (1, mesh.d + 1)).ravel()
    n = mesh.n_nodes
    return sparse.csr_matrix((ke.ravel(), (rows, cols)), shape=(n, n))


def _kappa_array(mesh, kappa):
    k = np.asarray(kappa, dtype=float)
    if k.shape not in ((mesh.d, mesh.d), (mesh.n_elements, mesh.d, mesh.d)):
        raise ValueError("kappa must be one (d, d) tensor or one per element")
    return as_spd(k)


def assemble(mesh, kappa, bc, source=0.0):
    bc.validate(mesh)
    k = _kappa_array(mesh, kappa)
    g, meas = element_geometry(mesh)
    stiff = _global_matrix(mesh, element_stiffness(g, meas, k))
    fixed, values = _dirichlet_values(mesh, bc)
    free = np.setdiff1d(np.arange(mesh.n_nodes), fixed)
    return LinearSystem(mesh, stiff, load_vector(mesh, bc, source), fixed, values, free)


def _check_residual(a, x, b):
    r = np.linalg.norm(a @ x - b)
    scale = max(np.linalg.norm(b), np.linalg.norm(a @ x), np.finfo(float).tiny)
    if r > RESIDUAL_TOL * scale:
        raise NumericalError(f"linear solve residual {r / scale:.3e} exceeds {RESIDUAL_TOL}")


def solve(system):
    """Nodal temperatures; Dirichlet values are imposed exactly."""
    t = np.zeros(system.mesh.n_nodes)
    t[system.fixed] = system.fixed_values
    if len(system.free) == 0:
        return t
    kff = system.stiffness[system.free][:, system.free]
    rhs = system.load[system.free] - system.stiffness[system.free][:, system.fixed] @ system.fixed_values
    if len(system.free) <= DENSE_LIMIT:
        a = kff.toarray()
        try:
            x = sla.cho_solve(sla.cho_factor(a), rhs)
        except sla.LinAlgError as exc:
            raise NumericalError(f"stiffness matrix is not positive definite: {exc}") from exc
    else:
        a = kff.tocsc()
        x = spla.splu(a).solve(rhs)
    _check_residual(a, x, rhs)
    t[system.free] = x
    return t


def reaction_power(system, t):
    """Total power leaving the body through the Dirichlet nodes."""
    r = system.stiffness @ t - system.load
    return -float(r[system.fixed].sum())


@dataclass
class FluxField:
    vectors: np.ndarray
    norm: np.ndarray
    direction: np.ndarray
    undirected: np.ndarray


def flux_field(q, tol=1e-12):
    """Norms and unit directions of element fluxes ``(..., m, d)``.

    Directions are flagged undirected (and set to NaN) where the norm falls
    below ``tol`` times the largest norm of the field.
    """
    q = np.asarray(q, dtype=float)
    norm = np.linalg.norm(q, axis=-1)
    peak = norm.max(axis=-1, keepdims=True) if norm.size else norm
    undirected = (norm <= tol * peak) | (norm == 0)
    with np.errstate(invalid="ignore", divide="ignore"):
        direction = np.where(undirected[..., None], np.nan, q / norm[..., None])
    return FluxField(q, norm, direction, undirected)


def heat_flux(mesh, t, kappa):
    """Element heat flux ``q = -kappa grad T``."""
    k = _kappa_array(mesh, kappa)
    g, _ = element_geometry(mesh)
    grad = np.einsum("eid,ei->ed", g, np.asarray(t)[mesh.elements])
    return flux_field(-np.einsum("...ab,eb->ea", k, grad))


class HomogeneousSolver:
    """Repeated solves with one spatially constant ``kappa`` per call.

    The free-free stiffness is linear in the ``d(d+1)/2`` independent entries
    of ``kappa``, so the basis matrices are assembled once and each solve only
    combines them and factors the result.
    """

    def __init__(self, mesh, bc, source=0.0):
        bc.validate(mesh)
        self.mesh = mesh
        self.bc = bc
        d = mesh.d
        g, meas = element_geometry(mesh)
        self.grads = g
        fixed, values = _dirichlet_values(mesh, bc)
        self.fixed, self.fixed_values = fixed, values
        self.free = np.setdiff1d(np.arange(mesh.n_nodes), fixed)
        self.load = load_vector(mesh, bc, source)
        self.pairs = [(a, b) for a in range(d) for b in range(a, d)]
        self.dense = len(self.free) <= DENSE_LIMIT
        self.basis_ff, self.basis_fd = [], []
        for a, b in self.pairs:
            e = np.zeros((d, d))
            e[a, b] = e[b, a] = 1.0
            k = _global_matrix(mesh, element_stiffness(g, meas, e))
            kf = k[self.free]
            kff = kf[:, self.free]
            self.basis_ff.append(kff.toarray() if self.dense else kff.tocsc())
            self.basis_fd.append(kf[:, self.fixed].toarray())

    def _combine(self, mats, kappa):
        out = kappa[0, 0] * mats[0]
        for m, (a, b) in zip(mats[1:], self.pairs[1:]):
            out = out + kappa[a, b] * m
        return out

    def solve(self, kappa):
        kappa = as_spd(kappa)
        t = np.zeros(self.mesh.n_nodes)
        t[self.fixed] = self.fixed_values
        kfd = self._combine(self.basis_fd, kappa)
        rhs = self.load[self.free] - kfd @ self.fixed_values
        a = self._combine(self.basis_ff, kappa)
        if self.dense:
            try:
                x = sla.cho_solve(sla.cho_factor(a, check_finite=False), rhs, check_finite=False)
            except sla.LinAlgError as exc:
                raise NumericalError(f"stiffness matrix is not positive definite: {exc}") from exc
        else:
            x = spla.splu(a).solve(rhs)
        _check_residual(a, x, rhs)
        t[self.free] = x
        return t

    def flux(self, t, kappa):
        grad = np.einsum("eid,ei->ed", self.grads, np.asarray(t)[self.mesh.elements])
        return flux_field(-grad @ np.asarray(kappa).T)


# --- mesh presets ---------------------------------------------------------

def _grid_triangles(nx, ny):
    """Two positively oriented triangles per cell of an (nx+1) x (ny+1) node grid."""
    i, j = np.meshgrid(np.arange(nx), np.arange(ny), indexing="xy")
    n00 = (j * (nx + 1) + i).ravel()
    n10, n01, n11 = n00 + 1, n00 + nx + 1, n00 + nx + 2
    lower = np.stack([n00, n10, n11], axis=1)
    upper = np.stack([n00, n11, n01], axis=1)
    return np.stack([lower, upper], axis=1).reshape(-1, 3)


def _grid_edges(nx, ny):
    ids = np.arange((nx + 1) * (ny + 1)).reshape(ny + 1, nx + 1)

    def chain(v):
        return np.stack([v[:-1], v[1:]], axis=1)

    return {"left": chain(ids[:, 0]), "right": chain(ids[:, -1]),
            "bottom": chain(ids[0, :]), "top": chain(ids[-1, :])}


def _check_resolution(*ns):
    for n in ns:
        if int(n) != n or n < 1:
            raise ValueError(f"invalid resolution {n!r}")


def rect_2d(width, height, n, ny=None):
    """Structured triangulation of ``[0, width] x [0, height]``.

    ``n`` cells along x (and by default a matching count along y). Sets:
    ``fixed`` (x = 0), ``flux`` (x = width), ``left``/``right``/``bottom``/
    ``top`` and ``boundary``.
    """
    if not (width > 0 and height > 0):
        raise ValueError("rectangle sides must be positive")
    ny = max(1, int(round(n * height / width))) if ny is None else ny
    _check_resolution(n, ny)
    x, y = np.meshgrid(np.linspace(0, width, n + 1), np.linspace(0, height, ny + 1))
    nodes = np.column_stack([x.ravel(), y.ravel()])
    edges = _grid_edges(n, ny)
    sets = dict(edges)
    sets["fixed"] = edges["left"]
    sets["flux"] = edges["right"]
    sets["boundary"] = np.concatenate(list(edges.values()))
    return Mesh(nodes, _grid_triangles(n, ny), sets)


def unit_square(n):
    """``2 n^2`` triangles on ``(n+1)^2`` nodes."""
    return rect_2d(1.0, 1.0, n, n)


def box_3d(n):
    """Unit cube split into ``6 n^3`` tetrahedra (Kuhn subdivision).

    Sets: ``fixed`` (z = 0), ``flux`` (z = 1) and ``boundary``.
    """
    _check_resolution(n)
    m = n + 1
    g = np.linspace(0.0, 1.0, m)
    z, y, x = np.meshgrid(g, g, g, indexing="ij")
    nodes = np.column_stack([x.ravel(), y.ravel(), z.ravel()])

    def nid(i, j, k):
        return (k * m + j) * m + i

    corner = np.array([[i, j, k] for k in range(n) for j in range(n) for i in range(n)])
    tets = []
    for perm in ([0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]):
        path = [corner.copy()]
        for axis in perm:
            step = path[-1].copy()
            step[:, axis] += 1
            path.append(step)
        tets.append(np.stack([nid(*p.T) for p in path], axis=1))
    tets = np.concatenate(tets)
    x4 = nodes[tets]
    neg = np.linalg.det(x4[:, 1:] - x4[:, :1]) < 0
    tets[neg] = tets[neg][:, [1, 0, 2, 3]]

    faces = {}
    for el in tets:
        for drop in range(4):
            f = np.delete(el, drop)
            faces.setdefault(tuple(sorted(f.tolist())), f)
    sets = {"fixed": [], "flux": [], "boundary": []}
    for key, f in faces.items():
        c = nodes[list(key)]
        on = [np.all(np.abs(c[:, a] - v) < 1e-12) for a in range(3) for v in (0.0, 1.0)]
        if any(on):
            sets["boundary"].append(f)
            if on[4]:
                sets["fixed"].append(f)
            if on[5]:
                sets["flux"].append(f)
    return Mesh(nodes, tets, {k: np.array(v) for k, v in sets.items()})


FEMUR_HEIGHT = 0.217


def femur_like_2d(n=8):
    """Synthetic bent, widening strip standing in for a femur outline (meters).

    ``n`` cells across and ``3 n`` along a curved centreline about 21.7 cm
    long; the top end is about 7 cm wide and leans medially. Sets: ``fixed``
    (base edge), ``flux`` (outer side over the top quarter) and ``boundary``.
    """
    _check_resolution(n)
    nx, ny = n, 3 * n
    s = np.linspace(0.0, 1.0, ny + 1)
    t = np.linspace(-0.5, 0.5, nx + 1)
    centre = np.column_stack([-0.03 * s ** 3, FEMUR_HEIGHT * s])
    tangent = np.column_stack([-0.09 * s ** 2, np.full_like(s, FEMUR_HEIGHT)])
    tangent /= np.linalg.norm(tangent, axis=1, keepdims=True)
    normal = np.column_stack([tangent[:, 1], -tangent[:, 0]])
    width = 0.03 + 0.04 * s ** 4
    pts = centre[:, None, :] + (t[None, :, None] * width[:, None, None]) * normal[:, None, :]
    nodes = pts.reshape(-1, 2)
    edges = _grid_edges(nx, ny)
    upper = s[:-1] >= 0.75 - 1e-12
    sets = {"fixed": edges["bottom"], "flux": edges["right"][upper],
            "boundary": np.concatenate(list(edges.values()))}
    return Mesh(nodes, _grid_triangles(nx, ny), sets)


MESH_PRESETS = {
    "unit_square": unit_square,
    "rect_2d": rect_2d,
    "box_3d": box_3d,
    "femur_like_2d": femur_like_2d,
}


def generate_mesh(preset, *args, **kwargs):
    if preset not in MESH_PRESETS:
        raise ValueError(f"unknown mesh preset {preset!r}; choose from {sorted(MESH_PRESETS)}")
    return MESH_PRESETS[preset](*args, **kwargs)


# --- text format ----------------------------------------------------------

def write_mesh(mesh, path_or_file):
    lines = [f"{mesh.d} {mesh.n_nodes} {mesh.n_elements}"]
    lines += [" ".join(repr(float(v)) for v in x) for x in mesh.nodes]
    lines += [" ".join(str(int(i)) for i in el) for el in mesh.elements]
    for name, facets in mesh.boundary_sets.items():
        lines.append(f"boundary {name} {len(facets)}")
        lines += [" ".join(str(int(i)) for i in f) for f in facets]
    text = "\n".join(lines) + "\n"
    if hasattr(path_or_file, "write"):
        path_or_file.write(text)
    else:
        with open(path_or_file, "w") as fh:
            fh.write(text)


def read_mesh(path_or_file):
    if hasattr(path_or_file, "read"):
        text = path_or_file.read()
    else:
        with open(path_or_file) as fh:
            text = fh.read()
    lines = [ln.split() for ln in text.splitlines()]
    pos = 0

    def take(what):
        nonlocal pos
        while pos < len(lines) and not lines[pos]:
            pos += 1
        if pos >= len(lines):
            raise ValueError(f"unexpected end of mesh file while reading {what}")
        pos += 1
        return pos, lines[pos - 1]

    try:
        ln, head = take("header")
        d, nn, ne = (int(v) for v in head)
        nodes = [[float(v) for v in take("node")[1]] for _ in range(nn)]
        elements = [[int(v) for v in take("element")[1]] for _ in range(ne)]
        sets = {}
        while True:
            while pos < len(lines) and not lines[pos]:
                pos += 1
            if pos >= len(lines):
                break
            ln, rec = take("boundary header")
            if len(rec) != 3 or rec[0] != "boundary":
                raise ValueError(f"line {ln}: expected 'boundary <name> <count>'")
            sets[rec[1]] = [[int(v) for v in take("facet")[1]] for _ in range(int(rec[2]))]
    except ValueError as exc:
        if str(exc).startswith(("line", "unexpected")):
            raise
        raise ValueError(f"line {pos}: {exc}") from exc
    nodes = np.array(nodes, dtype=float).reshape(nn, d)
    elements = np.array(elements, dtype=np.int64).reshape(ne, d + 1)
    return Mesh(nodes, elements, {k: np.array(v, dtype=np.int64).reshape(-1, d) for k, v in sets.items()})
