"""Computation DAGs and I/O lower bounds for convolution layers.

Builds the exact DAGs for small direct and Winograd convolutions, checks
their vertex counts against the closed forms, then evaluates the I/O
lower bounds on AlexNet-sized layers for a range of fast-memory sizes.
"""

from convio import (
    ConvShape, WinogradParams,
    build_direct_conv_dag, build_winograd_dag,
    dc_internal_output_count, wa_internal_output_count,
    validate_multi_step_partition,
    lower_bound_dc, lower_bound_wa,
)
from convio.dag import INTERNAL, OUTPUT

print("=== exact DAGs at desk scale ===")
shape = ConvShape.from_output(2, 2, 1, 2, 3, 3)
dag = build_direct_conv_dag(shape)
count = dag.count_vertices({INTERNAL, OUTPUT})
print(f"direct 3x3, c_in=2, out 2x2x1: {dag.n_vertices} vertices, "
      f"{count} internal+output (closed form {dc_internal_output_count(shape)})")
part = validate_multi_step_partition(dag)
print(f"multi-step partition: {part.n_steps} steps, sizes "
      f"{[len(part.step_sets[j]) for j in part.labels]}")

p = WinogradParams(2, 3)
wshape = ConvShape.from_output(2, 2, 1, 2, 3, 3)
wdag = build_winograd_dag(wshape, p)
print(f"winograd F(2x2,3x3), c_in=2: {wdag.count_vertices({INTERNAL, OUTPUT})} "
      f"internal+output (closed form {wa_internal_output_count(wshape, p)})")
print(f"steps: {validate_multi_step_partition(wdag).labels}")

print()
print("=== lower bounds on a conv3-sized layer (out 13x13x384, c_in=256) ===")
layer = ConvShape.from_output(13, 13, 384, 256, 3, 3)
print(f"{'S (words)':>10} {'omega DC':>14} {'exact DC':>14} {'omega WA':>14}")
for s in (256, 1024, 4096, 16384):
    dc = lower_bound_dc(layer, s)
    wa = lower_bound_wa(layer, p, s)
    print(f"{s:>10} {dc.omega:>14.0f} {dc.q_exact:>14.0f} {wa.omega:>14.0f}")

print()
print("omega scales as 1/sqrt(S): doubling S divides the bound by",
      f"{lower_bound_dc(layer, 1024).omega / lower_bound_dc(layer, 2048).omega:.4f}")
