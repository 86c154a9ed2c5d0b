"""Random SPD tensors with controlled symmetry class, scaling and orientation.

A sample is assembled as ``C = R Qr diag(lambda) Qr^T R^T``: the eigenvalues
``lambda`` are lognormal around the reference eigenvalues (random scaling),
``Qr`` is the fixed reference eigenbasis and ``R`` a random rotation
concentrated at the identity (von Mises angle in 2D, von Mises-Fisher axis in
3D).
"""
import enum
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate

from .linalg import as_spd, as_sym, hyd_dev_split, sym_eig
from .rotations import as_rotation, rotation_2d, rotation_to

CLASS_RTOL = 1e-10
MASK64 = (1 << 64) - 1


class SymmetryClass(str, enum.Enum):
    ISOTROPIC = "isotropic"
    PLAN_ISOTROPIC = "plan_isotropic"
    ORTHOTROPIC = "orthotropic"

    @property
    def rank(self):
        # position in the subgroup chain; larger rank = smaller symmetry group
        return {"isotropic": 0, "plan_isotropic": 1, "orthotropic": 2}[self.value]

    def check_dimension(self, d):
        if self is SymmetryClass.PLAN_ISOTROPIC and d != 3:
            raise ValueError("plan isotropy only exists for d=3")


def classify_eigenvalues(lam, rtol=CLASS_RTOL):
    """Symmetry class implied by the multiplicities of ``lam``."""
    lam = np.sort(np.asarray(lam, dtype=float))
    ties = np.sum(np.diff(lam) <= rtol * lam[1:])
    if ties == len(lam) - 1:
        return SymmetryClass.ISOTROPIC
    if ties == 0:
        return SymmetryClass.ORTHOTROPIC
    return SymmetryClass.PLAN_ISOTROPIC


def classify_tensor(c, rtol=CLASS_RTOL):
    return classify_eigenvalues(np.linalg.eigvalsh(as_sym(c)), rtol)


@dataclass(frozen=True, eq=False)
class ReferenceTensor:
    """Reference (mean) tensor ``Qr diag(eigenvalues) Qr^T``.

    ``frame`` matters even for an isotropic reference: it fixes the axes of
    orthotropic realisations.
    """
    eigenvalues: np.ndarray
    frame: np.ndarray
    symmetry: SymmetryClass = None

    def __post_init__(self):
        lam = np.asarray(self.eigenvalues, dtype=float)
        frame = as_rotation(self.frame)
        if lam.shape != (frame.shape[-1],):
            raise ValueError("eigenvalues and frame dimensions differ")
        if np.any(lam <= 0):
            raise ValueError("reference eigenvalues must be positive")
        found = classify_eigenvalues(lam)
        sym = found if self.symmetry is None else SymmetryClass(self.symmetry)
        sym.check_dimension(len(lam))
        if sym is not found:
            raise ValueError(f"eigenvalues {lam.tolist()} are {found.value}, "
                             f"not {sym.value}")
        object.__setattr__(self, "eigenvalues", lam)
        object.__setattr__(self, "frame", frame)
        object.__setattr__(self, "symmetry", sym)

    @classmethod
    def from_matrix(cls, c, symmetry=None):
        q, lam = sym_eig(as_spd(c))
        return cls(lam, q, symmetry)

    @property
    def d(self):
        return len(self.eigenvalues)

    @property
    def matrix(self):
        if self.symmetry is SymmetryClass.ISOTROPIC:
            return self.eigenvalues[0] * np.eye(self.d)
        q = self.frame
        return (q * self.eigenvalues) @ q.T

    @property
    def log(self):
        if self.symmetry is SymmetryClass.ISOTROPIC:
            return np.log(self.eigenvalues[0]) * np.eye(self.d)
        q = self.frame
        return (q * np.log(self.eigenvalues)) @ q.T

    def __eq__(self, other):
        return (isinstance(other, ReferenceTensor)
                and np.array_equal(self.eigenvalues, other.eigenvalues)
                and np.array_equal(self.frame, other.frame)
                and self.symmetry is other.symmetry)


COUPLINGS = ("identical", "independent", "ordered")


@dataclass(frozen=True)
class ScalingModel:
    """Lognormal eigenvalues ``lambda_i = exp(y_i)``, ``y_i ~ N(log lambda_ref_i, sigma)``.

    ``dispersion`` is the coefficient of variation of each lambda, so
    ``sigma = sqrt(log(1 + dispersion**2))``. The realisation class decides how
    many independent draws are made: one for isotropic realisations, two for
    plan-isotropic ones (tied pair plus the odd axis), ``d`` for orthotropic.
    ``ordered`` coupling (2D, orthotropic reference) keeps the reference
    ordering in every draw via ``y2 = xi1``, ``y1 = xi1 + exp(xi2)``.
    """
    reference: ReferenceTensor
    realisation_class: SymmetryClass
    dispersion: float
    coupling: str = "independent"

    def __post_init__(self):
        rc = SymmetryClass(self.realisation_class)
        object.__setattr__(self, "realisation_class", rc)
        rc.check_dimension(self.reference.d)
        if not self.dispersion > 0:
            raise ValueError("dispersion must be positive")
        if self.coupling not in COUPLINGS:
            raise ValueError(f"coupling must be one of {COUPLINGS}")
        if rc.rank < self.reference.symmetry.rank:
            raise ValueError(f"{rc.value} realisations cannot have a "
                             f"{self.reference.symmetry.value} mean")
        if (self.coupling == "identical") != (rc is SymmetryClass.ISOTROPIC):
            raise ValueError("identical coupling goes with isotropic realisations "
                             "and only with them")
        if self.coupling == "ordered" and (
                self.reference.d != 2 or self.reference.symmetry is not SymmetryClass.ORTHOTROPIC):
            raise ValueError("ordered coupling needs a 2D orthotropic reference")

    @property
    def sigma(self):
        return float(np.sqrt(np.log1p(self.dispersion ** 2)))

    def groups(self):
        """Index groups sharing one normal draw."""
        d = self.reference.d
        rc = self.realisation_class
        if rc is SymmetryClass.ISOTROPIC:
            return [list(range(d))]
        if rc is SymmetryClass.PLAN_ISOTROPIC:
            if self.reference.symmetry is SymmetryClass.PLAN_ISOTROPIC:
                lam = self.reference.eigenvalues
                for i in range(3):
                    pair = [j for j in range(3) if j != i]
                    if abs(lam[pair[0]] - lam[pair[1]]) <= CLASS_RTOL * lam[pair[0]]:
                        return [pair, [i]]
            return [[0, 1], [2]]
        return [[i] for i in range(d)]


def sample_scaling(model, rng, size=None):
    """Draw eigenvalues; shape ``(d,)`` or ``size + (d,)``."""
    shape = () if size is None else (size,) if np.isscalar(size) else tuple(size)
    mu = np.log(model.reference.eigenvalues)
    sigma = model.sigma
    d = len(mu)
    if model.coupling == "ordered":
        gap = mu[0] - mu[1]
        if gap <= 0:
            raise ValueError("ordered coupling needs lambda_1 > lambda_2")
        # exp(xi2) lognormal with mean gap, so E[y1] stays log lambda_1
        xi = rng.standard_normal(shape + (2,))
        y2 = mu[1] + sigma * xi[..., 0]
        y1 = y2 + np.exp(np.log(gap) - 0.5 * sigma ** 2 + sigma * xi[..., 1])
        return np.exp(np.stack([y1, y2], axis=-1))
    groups = model.groups()
    z = rng.standard_normal(shape + (len(groups),))
    y = np.empty(shape + (d,))
    for g, idx in enumerate(groups):
        y[..., idx] = z[..., g:g + 1]
    return np.exp(mu + sigma * y)


def sample_von_mises(mean, concentration, rng, size=None):
    """Von Mises angles in (-pi, pi] by Best and Fisher's rejection scheme."""
    kappa = float(concentration)
    if not kappa > 0:
        raise ValueError("concentration must be positive")
    n = 1 if size is None else int(np.prod(size))
    root = np.sqrt(1.0 + 4.0 * kappa ** 2)
    tau = 1.0 + root
    # (tau - sqrt(2 tau)) / (2 kappa) rewritten without cancellation for small kappa
    rho = 2.0 * kappa * tau / ((root + 1.0) * (tau + np.sqrt(2.0 * tau)))
    r = (1.0 + rho ** 2) / (2.0 * rho)
    out = np.empty(n)
    filled = 0
    while filled < n:
        m = max(16, int(1.3 * (n - filled)))
        u1, u2, u3 = rng.random((3, m))
        z = np.cos(np.pi * u1)
        f = (1.0 + r * z) / (r + z)
        c = kappa * (r - f)
        with np.errstate(divide="ignore", invalid="ignore"):
            ok = (c * (2.0 - c) - u2 > 0) | (np.log(c / u2) + 1.0 - c >= 0)
        theta = np.sign(u3 - 0.5) * np.arccos(np.clip(f, -1.0, 1.0))
        take = theta[ok][: n - filled]
        out[filled:filled + len(take)] = take
        filled += len(take)
    out = np.pi - np.mod(np.pi - (out + mean), 2.0 * np.pi)
    return float(out[0]) if size is None else out.reshape(size)


def _tangent_basis(mu):
    helper = np.array([1.0, 0.0, 0.0]) if abs(mu[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    e1 = np.cross(mu, helper)
    e1 /= np.linalg.norm(e1)
    return e1, np.cross(mu, e1)


def sample_vmf(mean_direction, concentration, rng, size=None):
    """Von Mises-Fisher unit vectors on the 2-sphere.

    The cosine ``t = mu . v`` is drawn by inverting its CDF,
    ``t = 1 + log(u + (1 - u) exp(-2 kappa)) / kappa``; the azimuth is uniform.
    """
    mu = np.asarray(mean_direction, dtype=float)
    if mu.shape != (3,) or abs(np.linalg.norm(mu) - 1.0) > 1e-12:
        raise ValueError("mean direction must be a unit 3-vector")
    kappa = float(concentration)
    if not kappa > 0:
        raise ValueError("concentration must be positive")
    shape = () if size is None else (size,) if np.isscalar(size) else tuple(size)
    u = 1.0 - rng.random(shape)  # (0, 1]
    t = 1.0 + np.log(u + (1.0 - u) * np.exp(-2.0 * kappa)) / kappa
    t = np.clip(t, -1.0, 1.0)
    psi = 2.0 * np.pi * rng.random(shape)
    e1, e2 = _tangent_basis(mu)
    s = np.sqrt(np.maximum(0.0, 1.0 - t * t))
    v = (t[..., None] * mu + (s * np.cos(psi))[..., None] * e1
         + (s * np.sin(psi))[..., None] * e2)
    return v / np.linalg.norm(v, axis=-1, keepdims=True)


@dataclass(frozen=True)
class OrientationModel:
    """Random rotation concentrated at the identity.

    2D: ``R = rot(phi - mean_angle)`` with ``phi`` von Mises. 3D: ``R`` is the
    Rodrigues rotation about ``mu x v`` taking ``mean_direction`` onto a von
    Mises-Fisher sample ``v``; spin about ``mean_direction`` is not randomized.
    """
    d: int
    concentration: float
    mean_angle: float = 0.0
    mean_direction: tuple = None

    def __post_init__(self):
        if self.d not in (2, 3):
            raise ValueError("d must be 2 or 3")
        if not self.concentration > 0:
            raise ValueError("concentration must be positive")
        if self.d == 3:
            if self.mean_direction is None:
                raise ValueError("3D orientation model needs a mean direction")
            mu = np.asarray(self.mean_direction, dtype=float)
            if mu.shape != (3,) or abs(np.linalg.norm(mu) - 1.0) > 1e-12:
                raise ValueError("mean direction must be a unit 3-vector")
            object.__setattr__(self, "mean_direction", tuple(float(x) for x in mu))


def sample_rotation(model, rng, size=None, with_flag=False):
    if model.d == 2:
        phi = sample_von_mises(model.mean_angle, model.concentration, rng, size)
        r = rotation_2d(np.pi - np.mod(np.pi - (phi - model.mean_angle), 2 * np.pi))
        flag = np.zeros(np.shape(phi), dtype=bool)
    else:
        mu = np.asarray(model.mean_direction)
        v = sample_vmf(mu, model.concentration, rng, size)
        r, flag = rotation_to(mu, v)
    return (r, flag) if with_flag else r


MODES = ("scaling_only", "rotation_only", "combined")


@dataclass(frozen=True)
class TensorModel:
    mode: str
    reference: ReferenceTensor
    scaling: ScalingModel = None
    orientation: OrientationModel = None
    name: str = field(default=None, compare=False)

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        need_s = self.mode in ("scaling_only", "combined")
        need_r = self.mode in ("rotation_only", "combined")
        if need_s != (self.scaling is not None):
            raise ValueError(f"mode {self.mode} {'needs' if need_s else 'excludes'} a scaling model")
        if need_r != (self.orientation is not None):
            raise ValueError(f"mode {self.mode} {'needs' if need_r else 'excludes'} an orientation model")
        if self.scaling is not None and self.scaling.reference != self.reference:
            raise ValueError("scaling model refers to a different reference tensor")
        if self.orientation is not None and self.orientation.d != self.reference.d:
            raise ValueError("orientation model dimension differs from the reference")

    @property
    def d(self):
        return self.reference.d

    @property
    def realisation_class(self):
        if self.scaling is not None:
            return self.scaling.realisation_class
        return self.reference.symmetry


def sample_tensor(model, rng, size=None):
    """One tensor (``size=None``) or a stack of ``size`` tensors."""
    ref = model.reference
    if model.scaling is not None:
        lam = sample_scaling(model.scaling, rng, size)
    else:
        lam = ref.eigenvalues if size is None else np.broadcast_to(
            ref.eigenvalues, (size, ref.d))
    if model.realisation_class is SymmetryClass.ISOTROPIC:
        # lambda I exactly; rotations leave it unchanged
        return lam[..., :1, None] * np.eye(ref.d)
    q = ref.frame
    c = (q * lam[..., None, :]) @ q.T
    if model.orientation is not None:
        r = sample_rotation(model.orientation, rng, size)
        c = r @ c @ np.swapaxes(r, -1, -2)
    return 0.5 * (c + np.swapaxes(c, -1, -2))


def splitmix64(x):
    z = (x + 0x9E3779B97F4A7C15) & MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def derive_seed(master, index):
    """Per-sample seed from (master seed, sample index)."""
    return splitmix64((splitmix64(int(master) & MASK64) + int(index)) & MASK64)


def rng_for(master, index):
    return np.random.Generator(np.random.PCG64(derive_seed(master, index)))


def sample_tensors(model, n, seed, start=0):
    """Samples ``start .. start+n-1``, each from its own derived generator."""
    out = np.empty((n, model.d, model.d))
    for k in range(n):
        out[k] = sample_tensor(model, rng_for(seed, start + k))
    return out


BLOCK = 4096


def sample_batch(sampler, n, seed, block=BLOCK):
    """Vectorized bulk sampling ``sampler(rng, size)`` in fixed-size blocks.

    Block ``b`` draws from ``rng_for(seed, b)``, so the result does not depend
    on how blocks are distributed over workers.
    """
    parts = []
    for b, lo in enumerate(range(0, n, block)):
        parts.append(sampler(rng_for(seed, b), min(block, n - lo)))
    if not parts:
        return np.empty((0,))
    return np.concatenate(parts, axis=0)


def rho2_von_mises(concentration, tol=1e-10):
    """Second trigonometric moment ``E[cos 2 phi]`` of a von Mises angle.

    Adaptive quadrature of ``1 - 2 E[sin^2 phi]`` (non-negative integrands,
    no cancellation). The density ``exp(eta (cos phi - 1))`` is truncated
    where it has fallen below e^-200.
    """
    eta = float(concentration)
    if not eta > 0:
        raise ValueError("concentration must be positive")
    cut = min(np.pi, 20.0 / np.sqrt(eta))

    def integral(fn):
        return integrate.quad(lambda p: fn(p) * np.exp(eta * (np.cos(p) - 1.0)),
                              0.0, cut, epsabs=0.0, epsrel=tol, limit=200)[0]

    sin2 = integral(lambda p: np.sin(p) ** 2) / integral(lambda p: 1.0)
    return float(np.clip(1.0 - 2.0 * sin2, 0.0, 1.0))


def mean_resultant_vmf(concentration):
    """``E[mu . v] = coth(kappa) - 1/kappa`` on the 2-sphere."""
    k = float(concentration)
    if not k > 0:
        raise ValueError("concentration must be positive")
    if k < 1e-4:
        return k / 3.0
    return float(1.0 / np.tanh(k) - 1.0 / k)


def distorted_euclid_mean_2d(h_ref, rho2):
    """Arithmetic mean of ``R H R^T`` over von Mises rotations: ``H_hyd + rho2 H_dev``."""
    h_ref = as_sym(h_ref)
    if h_ref.shape != (2, 2):
        raise ValueError("the closed form is derived for d=2 only")
    if not 0.0 <= rho2 <= 1.0:
        raise ValueError("rho2 must lie in [0, 1]")
    hyd, dev = hyd_dev_split(h_ref)
    return hyd + rho2 * dev


FRAME_2D = rotation_2d(-np.pi / 4)
FRAME_3D = np.array([[1.0, 0.0, 1.0], [0.0, np.sqrt(2.0), 0.0], [-1.0, 0.0, 1.0]]) / np.sqrt(2.0)
SCENARIOS = ("iso-iso-scl", "iso-ortho-scl", "ortho-ortho-dir")


def scenario(name, d=2, dispersion=0.1, concentration=75.0):
    """The three modelling scenarios with the femur conductivity values (W/mK).

    Isotropic reference ``0.54 I``; orthotropic reference with eigenvalues
    ``(0.54, 1)`` in 2D or ``(0.54, 0.75, 1)`` in 3D, whose axes sit at 45
    degrees in the x-y (2D) or x-z (3D) plane.
    """
    if d not in (2, 3):
        raise ValueError("d must be 2 or 3")
    frame = FRAME_2D if d == 2 else FRAME_3D
    if name in ("iso-iso-scl", "iso-ortho-scl"):
        ref = ReferenceTensor(np.full(d, 0.54), frame)
        if name == "iso-iso-scl":
            sm = ScalingModel(ref, SymmetryClass.ISOTROPIC, dispersion, "identical")
        else:
            sm = ScalingModel(ref, SymmetryClass.ORTHOTROPIC, dispersion, "independent")
        return TensorModel("scaling_only", ref, scaling=sm, name=name)
    if name == "ortho-ortho-dir":
        lam = [0.54, 1.0] if d == 2 else [0.54, 0.75, 1.0]
        ref = ReferenceTensor(np.array(lam), frame)
        if d == 2:
            om = OrientationModel(2, concentration, mean_angle=0.0)
        else:
            om = OrientationModel(3, concentration, mean_direction=tuple(frame[:, 2]))
        return TensorModel("rotation_only", ref, orientation=om, name=name)
    raise ValueError(f"unknown scenario {name!r}; choose from {SCENARIOS}")
