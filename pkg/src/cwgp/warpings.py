"""Invertible warpings ``y -> x`` and their compositions.

Every warping maps observation space ``y`` to latent space ``x`` and exposes
``forward``, ``derivative``, ``log_derivative`` and ``inverse``. The inverse
is closed form for every elementary transform except a non-trivial
sum-of-tanh (:class:`TanhMix`), which falls back to a bisection-seeded
Newton-Raphson solve.

Layers of a :class:`CompositeWarping` are listed in application order: the
first layer acts on the observations, the last one produces the latent value.
"""
from __future__ import annotations

import numpy as np

from .errors import DomainError, InvalidParameter, NoClosedFormInverse, NoConvergence
from .params import Parameterized

LOG2 = np.log(2.0)
BOXCOX_ZERO = 1e-12


def _arr(y):
    return np.asarray(y, dtype=float)


def _out(v, like):
    return float(v) if np.ndim(like) == 0 else v


def _log_cosh(z):
    a = np.abs(z)
    return a + np.log1p(np.exp(-2.0 * a)) - LOG2


def _first_bad(mask):
    idx = np.flatnonzero(np.ravel(mask))
    return int(idx[0]) if idx.size else None


class Warping:
    """Common interface of elementary and composite warpings."""

    def forward(self, y):
        raise NotImplementedError

    def log_derivative(self, y):
        raise NotImplementedError

    def derivative(self, y):
        return np.exp(self.log_derivative(y))

    def inverse(self, x):
        raise NoClosedFormInverse(f"{self!r} has no closed-form inverse")

    def invert(self, x, tol=1e-10, max_iter=100):
        """Inverse plus per-element count of numeric iterations (zero when closed form)."""
        try:
            y = self.inverse(x)
            return y, np.zeros(np.shape(x), dtype=int)
        except NoClosedFormInverse:
            return newton_bisect(self, x, tol=tol, max_iter=max_iter)

    @property
    def has_closed_form_inverse(self) -> bool:
        return True

    def forward_and_log_derivative(self, y):
        return self.forward(y), self.log_derivative(y)

    def check_domain(self, y):
        self.forward(y)


class ElementaryWarping(Parameterized, Warping):
    variant = ""
    code = ""

    def __repr__(self):
        args = ", ".join(f"{k}={v!r}" for k, v in self.params.items())
        return f"{type(self).__name__}({args})"

    @classmethod
    def default(cls):
        """Instance with data-independent default parameters."""
        return cls()

    @classmethod
    def near_identity(cls, y):
        """Instance initialised to approximate the identity on the range of ``y``."""
        return cls.default()

    def with_params(self, **params):
        values = {**self.params, **params}
        return type(self)(**values, fixed=self.fixed)

    @property
    def parameter_names(self):
        return list(self.transforms)


class Affine(ElementaryWarping):
    """``a + b y``; ``b`` keeps its initial sign during training."""

    variant = "affine"
    code = "L"
    transforms = {"a": "identity", "b": "logabs"}

    def __init__(self, a=0.0, b=1.0, fixed=()):
        super().__init__({"a": a, "b": b}, fixed)

    def _validate(self):
        if self._values["b"][0] == 0:
            raise InvalidParameter("affine scale b must be non-zero")

    def forward(self, y):
        return self.value("a") + self.value("b") * _arr(y)

    def log_derivative(self, y):
        return _out(np.full(np.shape(y), np.log(abs(self.value("b")))), y)

    def derivative(self, y):
        return _out(np.full(np.shape(y), self.value("b")), y)

    def inverse(self, x):
        return (_arr(x) - self.value("a")) / self.value("b")


class Shift(Affine):
    """Affine layer with the scale fixed at 1."""

    variant = "shift"
    code = "S"

    def __init__(self, a=0.0, b=1.0, fixed=("b",)):
        super().__init__(a, b, fixed=tuple(set(fixed) | {"b"}))


class Log(ElementaryWarping):
    variant = "log"
    code = "LOG"
    transforms = {}

    def __init__(self, fixed=()):
        super().__init__({}, fixed)

    def _check(self, y):
        y = _arr(y)
        bad = ~(y > 0)
        if np.any(bad):
            i = _first_bad(bad)
            raise DomainError(f"log warping needs y > 0, got {np.ravel(y)[i]!r}", index=i)
        return y

    def forward(self, y):
        return np.log(self._check(y))

    def log_derivative(self, y):
        return -np.log(self._check(y))

    def derivative(self, y):
        return 1.0 / self._check(y)

    def inverse(self, x):
        return np.exp(_arr(x))


class Arcsinh(ElementaryWarping):
    """``a + b asinh((y - c) / d)`` with ``b, d > 0``."""

    variant = "arcsinh"
    code = "A"
    transforms = {"a": "identity", "b": "log", "c": "identity", "d": "log"}

    def __init__(self, a=0.0, b=1.0, c=0.0, d=1.0, fixed=()):
        super().__init__({"a": a, "b": b, "c": c, "d": d}, fixed)

    def _validate(self):
        if self._values["b"][0] <= 0 or self._values["d"][0] <= 0:
            raise InvalidParameter("arcsinh b and d must be positive")

    @classmethod
    def near_identity(cls, y):
        y = _arr(y)
        c = float(np.median(y))
        scale = 3.0 * float(np.std(y)) or 1.0
        return cls(a=c, b=scale, c=c, d=scale)

    def forward(self, y):
        p = self.params
        return p["a"] + p["b"] * np.arcsinh((_arr(y) - p["c"]) / p["d"])

    def log_derivative(self, y):
        p = self.params
        return np.log(p["b"]) - np.log(np.hypot(p["d"], _arr(y) - p["c"]))

    def derivative(self, y):
        p = self.params
        return p["b"] / np.hypot(p["d"], _arr(y) - p["c"])

    def inverse(self, x):
        p = self.params
        return p["c"] + p["d"] * np.sinh((_arr(x) - p["a"]) / p["b"])


class BoxCox(ElementaryWarping):
    """Sign-extended Box-Cox ``(sgn(y)|y|^lam - 1) / lam``; ``lam = 0`` is the log.

    The derivative ``|y|^(lam-1)`` is singular or zero at the origin, so
    ``|y| < 1e-12`` is rejected unless ``lam == 1``.
    """

    variant = "boxcox"
    code = "BC"
    transforms = {"lam": "log"}

    def __init__(self, lam=1.0, fixed=()):
        if float(np.asarray(lam)) == 0.0:
            fixed = tuple(set(fixed) | {"lam"})
        super().__init__({"lam": lam}, fixed)

    def _validate(self):
        if self._values["lam"][0] < 0:
            raise InvalidParameter("Box-Cox lambda must be >= 0")

    def _check(self, y):
        y = _arr(y)
        lam = self.value("lam")
        if lam == 0.0:
            bad = ~(y > 0)
            what = "y > 0 when lambda = 0"
        elif lam == 1.0:
            bad = ~np.isfinite(y)
            what = "finite y"
        else:
            bad = ~(np.abs(y) >= BOXCOX_ZERO)
            what = f"|y| >= {BOXCOX_ZERO:g}"
        if np.any(bad):
            i = _first_bad(bad)
            raise DomainError(f"Box-Cox warping needs {what}, got {np.ravel(y)[i]!r}", index=i)
        return y

    def forward(self, y):
        y = self._check(y)
        lam = self.value("lam")
        if lam == 0.0:
            return np.log(y)
        if lam == 1.0:
            return y - 1.0
        ay = np.abs(y)
        with np.errstate(divide="ignore", invalid="ignore"):
            pos = np.expm1(lam * np.log(ay)) / lam
        neg = (-(ay**lam) - 1.0) / lam
        return np.where(y > 0, pos, neg)

    def log_derivative(self, y):
        y = self._check(y)
        lam = self.value("lam")
        if lam == 1.0:
            return _out(np.zeros(np.shape(y)), y)
        return (lam - 1.0) * np.log(np.abs(y))

    def inverse(self, x):
        x = _arr(x)
        lam = self.value("lam")
        if lam == 0.0:
            return np.exp(x)
        if lam == 1.0:
            return x + 1.0
        t = lam * x + 1.0
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            pos = np.exp(np.log1p(lam * x) / lam)
        neg = -(np.abs(t) ** (1.0 / lam))
        return np.where(t > 0, pos, neg)


class SinhArcsinh(ElementaryWarping):
    """``sinh(b asinh(y) - a)`` with ``b > 0``; the identity at ``a=0, b=1``."""

    variant = "sinharcsinh"
    code = "SA"
    transforms = {"a": "identity", "b": "log"}

    def __init__(self, a=0.0, b=1.0, fixed=()):
        super().__init__({"a": a, "b": b}, fixed)

    def _validate(self):
        if self._values["b"][0] <= 0:
            raise InvalidParameter("sinh-arcsinh b must be positive")

    def _is_identity(self):
        return self.value("a") == 0.0 and self.value("b") == 1.0

    def forward(self, y):
        y = _arr(y)
        if self._is_identity():
            return y.copy() if y.ndim else y
        return np.sinh(self.value("b") * np.arcsinh(y) - self.value("a"))

    def log_derivative(self, y):
        y = _arr(y)
        if self._is_identity():
            return _out(np.zeros(np.shape(y)), y)
        b = self.value("b")
        z = b * np.arcsinh(y) - self.value("a")
        return np.log(b) + _log_cosh(z) - np.log(np.hypot(1.0, y))

    def inverse(self, x):
        x = _arr(x)
        if self._is_identity():
            return x.copy() if x.ndim else x
        return np.sinh((np.arcsinh(x) + self.value("a")) / self.value("b"))


class TanhMix(ElementaryWarping):
    """Sum-of-tanh warping ``y + sum_j a_j tanh(b_j (y + c_j))`` with ``a_j, b_j >= 0``."""

    variant = "tanhmix"
    code = "T"
    transforms = {"a": "log", "b": "log", "c": "identity"}

    def __init__(self, a=(1.0,), b=(1.0,), c=(0.0,), fixed=()):
        super().__init__({"a": a, "b": b, "c": c}, fixed)

    def _scalar(self, name):
        return False

    def _validate(self):
        k = self._values["a"].size
        if self._values["b"].size != k or self._values["c"].size != k:
            raise InvalidParameter("tanh mixture a, b, c must have equal length")
        if np.any(self._values["a"] < 0) or np.any(self._values["b"] < 0):
            raise InvalidParameter("tanh mixture a_j and b_j must be non-negative")

    @property
    def n_components(self):
        return self._values["a"].size

    @classmethod
    def default(cls, n_components=1):
        return cls(a=[1.0] * n_components, b=[1.0] * n_components,
                   c=np.linspace(-1.0, 1.0, n_components) if n_components > 1 else [0.0])

    @classmethod
    def near_identity(cls, y, n_components=1):
        y = _arr(y)
        sd = float(np.std(y)) or 1.0
        qs = np.quantile(y, np.arange(1, n_components + 1) / (n_components + 1))
        return cls(a=[0.1 * sd] * n_components, b=[1.0 / sd] * n_components, c=-qs)

    def _terms(self, y):
        a, b, c = (self._values[n] for n in ("a", "b", "c"))
        y = _arr(y)
        return a, b, np.tanh(b * (y[..., None] + c))

    def forward(self, y):
        a, _, th = self._terms(y)
        return _arr(y) + th @ a

    def derivative(self, y):
        a, b, th = self._terms(y)
        return 1.0 + (1.0 - th * th) @ (a * b)

    def log_derivative(self, y):
        return np.log(self.derivative(y))

    @property
    def has_closed_form_inverse(self) -> bool:
        return not np.any(self._values["a"] * self._values["b"] != 0)

    def inverse(self, x):
        if self.has_closed_form_inverse:
            x = _arr(x)
            return x.copy() if x.ndim else x
        raise NoClosedFormInverse("a sum of tanh terms has no closed-form inverse")


ELEMENTARY = {cls.variant: cls for cls in (Affine, Shift, Log, Arcsinh, BoxCox, SinhArcsinh, TanhMix)}
CODES = {cls.code: cls for cls in (Affine, Shift, Log, Arcsinh, BoxCox, SinhArcsinh)}


class CompositeWarping(Warping):
    """``phi = phi_d o ... o phi_1`` with ``layers = [phi_1, ..., phi_d]``."""

    def __init__(self, layers=()):
        layers = list(layers)
        for layer in layers:
            if not isinstance(layer, ElementaryWarping):
                raise TypeError(f"composite layers must be elementary warpings, got {layer!r}")
        self.layers = tuple(layers)

    def __repr__(self):
        return f"CompositeWarping({list(self.layers)!r})"

    def __len__(self):
        return len(self.layers)

    def __add__(self, other):
        return CompositeWarping(self.layers + tuple(other.layers))

    @property
    def code(self):
        return "-".join(layer.code for layer in self.layers) or "GP"

    @property
    def param_count(self) -> int:
        return sum(layer.n_params for layer in self.layers)

    n_params = param_count

    @property
    def theta(self) -> np.ndarray:
        if not self.layers:
            return np.zeros(0)
        return np.concatenate([layer.theta for layer in self.layers])

    def with_theta(self, theta):
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (self.param_count,):
            raise InvalidParameter(f"expected {self.param_count} warping parameters, got {theta.shape}")
        new, i = [], 0
        for layer in self.layers:
            k = layer.n_params
            new.append(layer.with_theta(theta[i:i + k]))
            i += k
        return CompositeWarping(new)

    def forward(self, y):
        x = _arr(y)
        for layer in self.layers:
            x = layer.forward(x)
        return x if self.layers else (x.copy() if x.ndim else float(x))

    def forward_and_log_derivative(self, y):
        x = _arr(y)
        logd = np.zeros(np.shape(x))
        for layer in self.layers:
            logd = logd + layer.log_derivative(x)
            x = layer.forward(x)
        if not self.layers:
            x = x.copy()
        return _out(x, y), _out(logd, y)

    def log_derivative(self, y):
        return self.forward_and_log_derivative(y)[1]

    def derivative(self, y):
        z = _arr(y)
        d = np.ones(np.shape(z))
        for layer in self.layers:
            d = d * layer.derivative(z)
            z = layer.forward(z)
        return _out(d, y)

    @property
    def has_closed_form_inverse(self) -> bool:
        return all(layer.has_closed_form_inverse for layer in self.layers)

    def inverse(self, x):
        if not self.has_closed_form_inverse:
            raise NoClosedFormInverse("composite contains a layer without closed-form inverse")
        y = _arr(x)
        for layer in reversed(self.layers):
            y = layer.inverse(y)
        return _out(y, x) if self.layers else (y.copy() if y.ndim else float(y))

    def invert(self, x, tol=1e-10, max_iter=100):
        y = _arr(x)
        iters = np.zeros(np.shape(y), dtype=int)
        for layer in reversed(self.layers):
            y, k = layer.invert(y, tol=tol, max_iter=max_iter)
            iters = iters + k
        return (y.copy() if not self.layers else y), iters


def as_composite(warping) -> CompositeWarping:
    if warping is None:
        return CompositeWarping()
    if isinstance(warping, CompositeWarping):
        return warping
    if isinstance(warping, ElementaryWarping):
        return CompositeWarping([warping])
    return CompositeWarping(list(warping))


# ----------------------------------------------------------------------------
# numeric inversion


def newton_bisect(warping, x, tol=1e-10, max_iter=100, seed_width=1e-2, max_bisect=60):
    """Vectorised inverse of a strictly increasing warping.

    The root of ``forward(y) - x`` is bracketed by doubling steps outward from
    ``y = x``, narrowed by bisection to width ``seed_width * max(1, |y|)`` (at
    most ``max_bisect`` halvings), then polished with Newton steps that fall
    back to bisection whenever they leave the bracket. Returns ``(y, iters)``
    where ``iters`` counts forward evaluations per element.
    """
    x = _arr(x)
    shape = x.shape
    x = x.ravel().copy()
    if not np.all(np.isfinite(x)):
        raise DomainError("cannot invert a non-finite value", index=_first_bad(~np.isfinite(x)))
    n = x.size
    iters = np.zeros(n, dtype=int)
    f = warping.forward

    lo, hi = x.copy(), x.copy()
    for side, sign in ((lo, -1.0), (hi, 1.0)):
        step = np.ones(n)
        todo = np.arange(n)
        for _ in range(1100):
            fv = f(side[todo]) - x[todo]
            iters[todo] += 1
            todo = todo[(fv > 0) if sign < 0 else (fv < 0)]
            if todo.size == 0:
                break
            side[todo] += sign * step[todo]
            step[todo] *= 2.0
        else:
            raise NoConvergence("could not bracket the inverse", bracket=(lo, hi))

    todo = np.arange(n)
    for _ in range(max_bisect):
        wide = (hi[todo] - lo[todo]) > seed_width * np.maximum(1.0, np.abs(lo[todo]))
        todo = todo[wide]
        if todo.size == 0:
            break
        mid = 0.5 * (lo[todo] + hi[todo])
        above = f(mid) > x[todo]
        iters[todo] += 1
        hi[todo[above]] = mid[above]
        lo[todo[~above]] = mid[~above]

    y = 0.5 * (lo + hi)
    tol_eff = np.maximum(tol, 4.0 * np.finfo(float).eps * np.maximum(1.0, np.abs(x)))
    todo = np.arange(n)
    for _ in range(max_iter):
        yt = y[todo]
        r = f(yt) - x[todo]
        iters[todo] += 1
        done = np.abs(r) <= tol_eff[todo]
        pos = r > 0
        hi[todo[pos]] = np.minimum(hi[todo[pos]], yt[pos])
        lo[todo[~pos]] = np.maximum(lo[todo[~pos]], yt[~pos])
        collapsed = (hi[todo] - lo[todo]) <= 4.0 * np.spacing(np.maximum(np.abs(lo[todo]), np.abs(hi[todo])))
        done |= collapsed
        todo, yt, r = todo[~done], yt[~done], r[~done]
        if todo.size == 0:
            break
        with np.errstate(divide="ignore", invalid="ignore"):
            step = yt - r / warping.derivative(yt)
        outside = ~((step > lo[todo]) & (step < hi[todo]))
        step[outside] = 0.5 * (lo[todo][outside] + hi[todo][outside])
        y[todo] = step
    else:
        if todo.size:
            raise NoConvergence(
                f"Newton-Raphson did not converge for {todo.size} value(s) in {max_iter} steps",
                bracket=(lo[todo].reshape(-1), hi[todo].reshape(-1)),
            )
    return y.reshape(shape) if shape else float(y[0]), iters.reshape(shape) if shape else int(iters[0])


def numeric_inverse(warping, x, tol=1e-10, max_iter=100):
    """Scalar bisection-seeded Newton inverse; returns ``(y, iterations)``."""
    if tol <= 0:
        raise InvalidParameter("tol must be positive")
    y, k = newton_bisect(warping, float(x), tol=tol, max_iter=max_iter)
    return float(y), int(k)


# ----------------------------------------------------------------------------
# helpers


def forward(w, y):
    return w.forward(y)


def derivative(w, y):
    return w.derivative(y)


def inverse(w, x):
    return w.inverse(x)


def boxcox_limit_check(lam, y):
    """Box-Cox value for ``lam`` in ``[0, 1e-6]``, continuous at the log limit."""
    if not 0.0 <= lam <= 1e-6:
        raise InvalidParameter("lambda must lie in [0, 1e-6]")
    return float(BoxCox(lam, fixed=("lam",)).forward(float(y)))


def sal_layer(a, b, c, d) -> CompositeWarping:
    """``a + b sinh(c asinh(y) - d)`` as sinh-arcsinh followed by affine."""
    if not (b > 0 and c > 0):
        raise InvalidParameter("SAL layer needs b > 0 and c > 0")
    return CompositeWarping([SinhArcsinh(a=d, b=c), Affine(a=a, b=b)])


def identity_sal():
    return sal_layer(0.0, 1.0, 1.0, 0.0)


def parse_code(code: str, targets=None, tanh_components=1) -> CompositeWarping:
    """Build a composite from a dash-separated code such as ``"BC-L-SA"``.

    Codes: L affine, S shift, SA sinh-arcsinh, BC Box-Cox, A arcsinh, LOG log,
    T<k> sum of k tanh terms; ``GP`` or an empty string is the identity. With
    ``targets``, each layer starts near the identity on the data it receives.
    """
    code = code.strip()
    if code.upper() in ("", "GP", "ID", "IDENTITY"):
        return CompositeWarping()
    layers = []
    z = None if targets is None else _arr(targets)
    for token in code.split("-"):
        t = token.strip().upper()
        if t.startswith("T") and t[1:].isdigit():
            k = int(t[1:])
            layer = TanhMix.near_identity(z, k) if z is not None else TanhMix.default(k)
        elif t in CODES:
            cls = CODES[t]
            layer = cls.near_identity(z) if z is not None else cls.default()
        else:
            raise InvalidParameter(f"unknown warping code {token!r}")
        layers.append(layer)
        if z is not None:
            z = layer.forward(z)
    return CompositeWarping(layers)


def reset_to_near_identity(warping: CompositeWarping, targets) -> CompositeWarping:
    """Same structure and fixed flags, re-initialised near the identity on ``targets``."""
    z = _arr(targets)
    layers = []
    for layer in warping.layers:
        if isinstance(layer, TanhMix):
            new = TanhMix.near_identity(z, layer.n_components)
        else:
            new = type(layer).near_identity(z)
        new = _keep_fixed(new, layer)
        layers.append(new)
        z = new.forward(z)
    return CompositeWarping(layers)


def reset_to_default(warping: CompositeWarping) -> CompositeWarping:
    layers = []
    for layer in warping.layers:
        if isinstance(layer, TanhMix):
            new = TanhMix.default(layer.n_components)
        else:
            new = type(layer).default()
        layers.append(_keep_fixed(new, layer))
    return CompositeWarping(layers)


def _keep_fixed(new, old):
    if not old.fixed:
        return new
    values = new.params
    for name in old.fixed:
        values[name] = old.value(name)
    return type(old)(**values, fixed=old.fixed)
