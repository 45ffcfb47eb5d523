"""Problem geometry, hardware model, and the input reuse factor.

Everything downstream (DAG construction, analytic bounds, the dataflow
simulator and the tuner) works in terms of these three value types.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from fractions import Fraction


class GeometryError(ValueError):
    """Raised when convolution geometry is inconsistent (e.g. kernel > input)."""


def output_shape(w_in: int, h_in: int, w_ker: int, h_ker: int, stride: int) -> tuple[int, int]:
    """Valid-padding output dims: floor((dim_in - dim_ker)/stride) + 1 per axis."""
    if w_ker > w_in or h_ker > h_in:
        raise GeometryError(
            f"kernel {w_ker}x{h_ker} larger than input {w_in}x{h_in}"
        )
    if min(w_in, h_in, w_ker, h_ker, stride) < 1:
        raise GeometryError("all geometry fields must be >= 1")
    return (w_in - w_ker) // stride + 1, (h_in - h_ker) // stride + 1


@dataclass(frozen=True)
class ConvShape:
    """Geometry of one convolution layer (valid padding, NCHW-agnostic).

    ``n`` is the batch size; it scales workload only and never enters the
    per-image bound formulas.
    """

    w_in: int
    h_in: int
    c_in: int
    w_out: int
    h_out: int
    c_out: int
    w_ker: int
    h_ker: int
    stride: int = 1
    n: int = 1

    def __post_init__(self):
        for name in ("w_in", "h_in", "c_in", "w_out", "h_out", "c_out",
                     "w_ker", "h_ker", "stride", "n"):
            if getattr(self, name) < 1:
                raise GeometryError(f"{name} must be >= 1, got {getattr(self, name)}")
        expect = output_shape(self.w_in, self.h_in, self.w_ker, self.h_ker, self.stride)
        if (self.w_out, self.h_out) != expect:
            raise GeometryError(
                f"output dims {(self.w_out, self.h_out)} inconsistent with "
                f"valid-padding geometry {expect}"
            )

    @classmethod
    def from_input(cls, w_in, h_in, c_in, w_ker, h_ker, c_out, stride=1, n=1) -> "ConvShape":
        w_out, h_out = output_shape(w_in, h_in, w_ker, h_ker, stride)
        return cls(w_in, h_in, c_in, w_out, h_out, c_out, w_ker, h_ker, stride, n)

    @classmethod
    def from_output(cls, w_out, h_out, c_out, c_in, w_ker, h_ker, stride=1, n=1) -> "ConvShape":
        """Shape with the minimal valid input producing the requested output."""
        w_in = stride * (w_out - 1) + w_ker
        h_in = stride * (h_out - 1) + h_ker
        return cls(w_in, h_in, c_in, w_out, h_out, c_out, w_ker, h_ker, stride, n)

    @property
    def outputs_per_image(self) -> int:
        return self.w_out * self.h_out * self.c_out

    @property
    def window_size(self) -> int:
        """Elements of one sliding window across all input channels."""
        return self.w_ker * self.h_ker * self.c_in


def reuse_factor(shape: ConvShape) -> Fraction:
    """Maximum number of sliding windows reusing one input element.

    Kept exact (a Fraction): flooring would silently loosen every bound
    built on top of it.
    """
    return Fraction(shape.w_ker * shape.h_ker, shape.stride ** 2)


@dataclass(frozen=True)
class WinogradParams:
    """Tile parameters for F(e x e, r x r): e output edge, r kernel edge."""

    e: int
    r: int

    def __post_init__(self):
        if self.e < 1 or self.r < 1:
            raise GeometryError("Winograd parameters must be >= 1")
        ratio = self.r / self.e
        if not (0.5 <= ratio <= 2.0):
            warnings.warn(
                f"r/e = {ratio:g} outside [1/2, 2]; bound estimates assume that range",
                stacklevel=2,
            )

    @property
    def m(self) -> int:
        """Transformed tile edge e + r - 1."""
        return self.e + self.r - 1

    def check_shape(self, shape: ConvShape) -> None:
        if shape.stride != 1:
            raise GeometryError("Winograd requires unit stride")
        if shape.w_ker != shape.h_ker or shape.w_ker != self.r:
            raise GeometryError(
                f"Winograd needs square kernels with edge r={self.r}, "
                f"got {shape.w_ker}x{shape.h_ker}"
            )


@dataclass(frozen=True)
class HwModel:
    """Two-level memory machine.

    s      -- fast-memory capacity in words
    s_sm   -- shared-memory words per streaming multiprocessor
    n_p    -- active processors (thread blocks running concurrently)
    alpha  -- cost per arithmetic op (runtime proxy)
    beta   -- cost per word moved (runtime proxy)
    """

    s: int
    s_sm: int | None = None
    n_p: int = 1
    alpha: float = 1.0
    beta: float = 4.0

    def __post_init__(self):
        if self.s < 3:
            raise GeometryError("fast memory must hold >= 3 words (one binary op)")
        if self.n_p < 1:
            raise GeometryError("n_p must be >= 1")
        if self.alpha < 0 or self.beta < 0:
            raise GeometryError("cost coefficients must be nonnegative")
        if self.s_sm is None:
            # default: one SM's shared memory covers two blocks of the
            # per-processor share of fast memory
            object.__setattr__(self, "s_sm", 2 * (self.s // self.n_p))
        if self.s_sm < 2:
            raise GeometryError("s_sm must be >= 2")

    @property
    def per_proc_words(self) -> int:
        return self.s // self.n_p
