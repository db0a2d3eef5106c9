"""Real Fourier spectral tools on the 2*pi periodic line.

Basis functions are orthonormal in L2(0, 2*pi):

    e_0      = 1/sqrt(2*pi)
    e_{k,c}  = cos(k x)/sqrt(pi),   k >= 1
    e_{k,s}  = sin(k x)/sqrt(pi),   k >= 1

A field is stored as the real coefficient vector against this basis, ordered
(0, const), (1, cos), (1, sin), (2, cos), (2, sin), ...  The linear operator
A = -(1 + d_xx)^2 is diagonal here with eigenvalue -(1 - k^2)^2 on both
parities of wavenumber k, so all operator work reduces to per-mode scaling.

Physical-space work (cubic and kernel nonlinearities, L4 norms) happens on a
uniform collocation grid x_j = 2*pi*j/M via dense synthesis/analysis matrices.
M must give dealiasing headroom for cubic terms; the default grid is padded
far enough that the projected cubic is exact up to rounding.
"""

import numpy as np

TWO_PI = 2.0 * np.pi


def eigenvalue(k):
    """Eigenvalue -(1 - k^2)^2 of A = -(1 + d_xx)^2 on wavenumber k."""
    if k < 0 or k != int(k):
        raise ValueError(f"wavenumber must be a nonnegative integer, got {k}")
    k = int(k)
    return -float((1 - k * k) ** 2)


class SpectralBasis:
    """Real Fourier basis with K wavenumbers on an M-point grid.

    Parameters
    ----------
    max_wavenumber : int
        Largest resolved wavenumber K >= 1; the basis has 2K+1 modes.
    grid_size : int, optional
        Number of collocation points M.  Must satisfy M >= 3K+1 (headroom
        for cubic products); default 4*(K+1), which keeps the Galerkin
        projection of a cubic exact up to rounding.
    """

    def __init__(self, max_wavenumber, grid_size=None):
        K = int(max_wavenumber)
        if K < 1:
            raise ValueError(f"max_wavenumber must be >= 1, got {max_wavenumber}")
        if grid_size is None:
            grid_size = 4 * (K + 1)
        M = int(grid_size)
        if M < 3 * K + 1:
            raise ValueError(
                f"grid_size {M} too small for max_wavenumber {K}: need M >= 3K+1 = {3 * K + 1}")
        self.max_wavenumber = K
        self.grid_size = M

        table = [(0, "const")]
        for k in range(1, K + 1):
            table.append((k, "cos"))
            table.append((k, "sin"))
        self.mode_table = tuple(table)

        self.x = TWO_PI * np.arange(M) / M
        self.wavenumbers = np.array([k for k, _ in table], dtype=np.intp)

        # synthesis S[j, m] = e_m(x_j); analysis is its scaled transpose,
        # exact for M >= 2K+1 by discrete orthogonality
        S = np.empty((M, self.n_modes))
        S[:, 0] = 1.0 / np.sqrt(TWO_PI)
        for m, (k, parity) in enumerate(table):
            if parity == "cos":
                S[:, m] = np.cos(k * self.x) / np.sqrt(np.pi)
            elif parity == "sin":
                S[:, m] = np.sin(k * self.x) / np.sqrt(np.pi)
        self._synthesis = S
        self._analysis = (TWO_PI / M) * S.T.copy()
        for a in (self.x, self.wavenumbers, self._synthesis, self._analysis):
            a.setflags(write=False)

    @property
    def n_modes(self):
        return 2 * self.max_wavenumber + 1

    def index_of(self, k, parity):
        """Position of mode (k, parity) in the coefficient vector."""
        if k == 0:
            if parity != "const":
                raise ValueError("k=0 carries only the constant mode")
            return 0
        if not 1 <= k <= self.max_wavenumber:
            raise ValueError(f"wavenumber {k} outside 1..{self.max_wavenumber}")
        if parity not in ("cos", "sin"):
            raise ValueError(f"parity must be cos or sin, got {parity!r}")
        return 2 * k - 1 + (0 if parity == "cos" else 1)

    def low_mode_count(self, cutoff):
        """Number of modes with wavenumber <= cutoff (they prefix the table)."""
        if not 1 <= cutoff <= self.max_wavenumber:
            raise ValueError(f"cutoff {cutoff} outside 1..{self.max_wavenumber}")
        return 2 * cutoff + 1

    def synthesis_matrix(self):
        return self._synthesis

    def analysis_matrix(self):
        return self._analysis

    def __eq__(self, other):
        return (isinstance(other, SpectralBasis)
                and other.max_wavenumber == self.max_wavenumber
                and other.grid_size == self.grid_size)

    def __hash__(self):
        return hash((self.max_wavenumber, self.grid_size))

    def __repr__(self):
        return f"SpectralBasis(max_wavenumber={self.max_wavenumber}, grid_size={self.grid_size})"


class SpectralField:
    """Immutable real coefficient vector over a SpectralBasis."""

    __slots__ = ("coeffs", "basis")

    def __init__(self, coeffs, basis):
        c = np.array(coeffs, dtype=float)
        if c.shape != (basis.n_modes,):
            raise ValueError(f"coefficient shape {c.shape} does not match "
                             f"basis with {basis.n_modes} modes")
        c.setflags(write=False)
        self.coeffs = c
        self.basis = basis

    @classmethod
    def zeros(cls, basis):
        return cls(np.zeros(basis.n_modes), basis)

    @classmethod
    def single_mode(cls, basis, k, parity, amplitude=1.0):
        c = np.zeros(basis.n_modes)
        c[basis.index_of(k, parity)] = amplitude
        return cls(c, basis)

    def norm(self):
        """L2 norm; Parseval makes this the plain euclidean coefficient norm."""
        return float(np.sqrt(np.dot(self.coeffs, self.coeffs)))

    def normsq(self):
        return float(np.dot(self.coeffs, self.coeffs))

    def is_finite(self):
        return bool(np.all(np.isfinite(self.coeffs)))

    def __add__(self, other):
        self._check_same_basis(other)
        return SpectralField(self.coeffs + other.coeffs, self.basis)

    def __sub__(self, other):
        self._check_same_basis(other)
        return SpectralField(self.coeffs - other.coeffs, self.basis)

    def __mul__(self, scalar):
        return SpectralField(self.coeffs * float(scalar), self.basis)

    __rmul__ = __mul__

    def _check_same_basis(self, other):
        if other.basis != self.basis:
            raise ValueError("fields live on different bases")

    def __repr__(self):
        return f"SpectralField(n_modes={self.basis.n_modes}, norm={self.norm():.6g})"


class OperatorSpectrum:
    """Diagonal spectrum of A = -(1 + d_xx)^2 aligned with a basis's mode table."""

    def __init__(self, basis):
        self.basis = basis
        ev = np.array([eigenvalue(k) for k in basis.wavenumbers])
        ev.setflags(write=False)
        self.eigenvalues = ev

    def quadratic_form(self, u):
        """<A u, u> = sum_k alpha_k u_k^2, always <= 0."""
        return float(np.dot(self.eigenvalues, u.coeffs ** 2))


def project_low(u, cutoff):
    """Zero every coefficient with wavenumber above `cutoff` (k=0 is kept)."""
    basis = u.basis
    n_low = basis.low_mode_count(cutoff)
    c = u.coeffs.copy()
    c[n_low:] = 0.0
    return SpectralField(c, basis)


def project_high(u, cutoff):
    """Complement of project_low: keep only wavenumbers above `cutoff`."""
    basis = u.basis
    n_low = basis.low_mode_count(cutoff)
    c = u.coeffs.copy()
    c[:n_low] = 0.0
    return SpectralField(c, basis)


def to_physical(u):
    """Sample the field on the collocation grid."""
    return u.basis.synthesis_matrix() @ u.coeffs


def from_physical(grid_values, basis):
    """Project grid samples back onto the basis (exact for band-limited data)."""
    g = np.asarray(grid_values, dtype=float)
    if g.shape != (basis.grid_size,):
        raise ValueError(f"grid length {g.shape} does not match M={basis.grid_size}")
    return SpectralField(basis.analysis_matrix() @ g, basis)


def l4_norm4(u):
    """Quadrature of u^4 over the period, (2*pi/M) * sum u(x_j)^4."""
    g = to_physical(u)
    return float((TWO_PI / u.basis.grid_size) * np.sum(g ** 4))


def circular_convolve(kernel, f):
    """Periodic convolution (G*f)(x_j) = (2*pi/M) sum_i G(x_j - x_i) f(x_i).

    Both arguments are samples on the same uniform M-point grid; computed
    via FFT, which matches the direct double sum to rounding.
    """
    kernel = np.asarray(kernel, dtype=float)
    f = np.asarray(f, dtype=float)
    if kernel.shape != f.shape or kernel.ndim != 1:
        raise ValueError(f"shape mismatch: kernel {kernel.shape}, f {f.shape}")
    M = kernel.shape[0]
    out = np.fft.irfft(np.fft.rfft(kernel) * np.fft.rfft(f), n=M)
    return (TWO_PI / M) * out


def circulant_matrix(kernel):
    """Dense matrix C with C @ f == circular_convolve(kernel, f).

    C[j, i] = (2*pi/M) * G(x_{j-i mod M}); used by the stepping kernels where
    the kernel is fixed for a whole run.
    """
    kernel = np.asarray(kernel, dtype=float)
    M = kernel.shape[0]
    idx = (np.arange(M)[:, None] - np.arange(M)[None, :]) % M
    return (TWO_PI / M) * kernel[idx]
