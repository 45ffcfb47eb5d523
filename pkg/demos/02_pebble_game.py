"""Exact red-blue pebble game oracles on the tiny-DAG corpus.

For every bundled DAG this prints the exact minimum I/O from exhaustive
pebbling, the exact S-partition count P(2S), and the Hong-Kung bound
S*(P(2S)-1) that the pebbling minimum must dominate.
"""

from convio.fixtures import corpus
from convio.pebble import min_io_pebbling, brute_force_p

S = 3
print(f"{'dag':<28} {'|V|':>4} {'q_min':>6} {'P(2S)':>6} {'S(P-1)':>7}  ok")
for name, fx in corpus().items():
    dag = fx.dag
    q = min_io_pebbling(dag, S)
    p = brute_force_p(dag, 2 * S)
    bound = S * (p - 1)
    print(f"{name:<28} {dag.n_vertices:>4} {q:>6} {p:>6} {bound:>7}  "
          f"{'yes' if q >= bound else 'NO'}")

print()
print("more red pebbles never hurt (q_min nonincreasing in S):")
dag = corpus()["dc_2x2_cin1_out1x1x1"].dag
print("  dc 2x2 kernel:", {s: min_io_pebbling(dag, s) for s in (3, 4, 5)})
