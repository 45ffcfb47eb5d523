"""Tiny-DAG corpus used by the pebble-game oracles and the soundness tests.

Every entry stays within the exact-oracle caps (<= 20 vertices, <= 12
partitionable vertices). Convolution entries carry their shape so the
analytic bounds can be evaluated against the pebbling oracle.
"""

from __future__ import annotations

from dataclasses import dataclass

from .dag import Dag, INPUT, INTERNAL, OUTPUT, build_direct_conv_dag, build_winograd_dag
from .model import ConvShape, WinogradParams


@dataclass
class Fixture:
    name: str
    dag: Dag
    algorithm: str | None = None          # "direct" | "winograd" | None
    shape: ConvShape | None = None
    winograd: WinogradParams | None = None


def _single_vertex() -> Dag:
    d = Dag()
    d.add_vertex(OUTPUT, 0)
    return d


def _copy_chain(length: int) -> Dag:
    d = Dag()
    prev = d.add_vertex(INPUT, 0)
    for i in range(length):
        v = d.add_vertex(OUTPUT if i == length - 1 else INTERNAL, 1)
        d.add_edge(prev, v)
        prev = v
    return d


def _product2() -> Dag:
    d = Dag()
    a, b = d.add_vertex(INPUT, 0), d.add_vertex(INPUT, 0)
    p = d.add_vertex(OUTPUT, 1)
    d.add_edge(a, p)
    d.add_edge(b, p)
    return d


def _fanout_reduce() -> Dag:
    d = Dag()
    src = d.add_vertex(INPUT, 0)
    mids = []
    for _ in range(3):
        v = d.add_vertex(INTERNAL, 1)
        d.add_edge(src, v)
        mids.append(v)
    t = d.add_vertex(INTERNAL, 2)
    d.add_edge(mids[0], t)
    d.add_edge(mids[1], t)
    o = d.add_vertex(OUTPUT, 2)
    d.add_edge(t, o)
    d.add_edge(mids[2], o)
    return d


def _diamond() -> Dag:
    d = Dag()
    a, b, c = (d.add_vertex(INPUT, 0) for _ in range(3))
    x = d.add_vertex(INTERNAL, 1)
    d.add_edge(a, x)
    d.add_edge(b, x)
    y = d.add_vertex(INTERNAL, 1)
    d.add_edge(b, y)
    d.add_edge(c, y)
    z = d.add_vertex(INTERNAL, 2)
    d.add_edge(x, z)
    d.add_edge(y, z)
    o1 = d.add_vertex(OUTPUT, 3)
    d.add_edge(z, o1)
    d.add_edge(x, o1)
    o2 = d.add_vertex(OUTPUT, 3)
    d.add_edge(z, o2)
    d.add_edge(y, o2)
    return d


def _binary_tree(leaves: int) -> Dag:
    d = Dag()
    level = [d.add_vertex(INPUT, 0) for _ in range(leaves)]
    while len(level) > 1:
        nxt = []
        for i in range(0, len(level), 2):
            v = d.add_vertex(OUTPUT if len(level) == 2 else INTERNAL, 1)
            d.add_edge(level[i], v)
            d.add_edge(level[i + 1], v)
            nxt.append(v)
        level = nxt
    return d


def _bipartite_products(rows: int, cols: int) -> Dag:
    d = Dag()
    rs = [d.add_vertex(INPUT, 0) for _ in range(rows)]
    cs = [d.add_vertex(INPUT, 0) for _ in range(cols)]
    for r in rs:
        for c in cs:
            v = d.add_vertex(OUTPUT, 1)
            d.add_edge(r, v)
            d.add_edge(c, v)
    return d


def _dc(w_out, h_out, c_out, c_in, w_ker, h_ker) -> Fixture:
    shape = ConvShape.from_output(w_out, h_out, c_out, c_in, w_ker, h_ker)
    name = f"dc_{w_ker}x{h_ker}_cin{c_in}_out{w_out}x{h_out}x{c_out}"
    return Fixture(name, build_direct_conv_dag(shape), "direct", shape)


def _wa(w_out, h_out, c_out, c_in, e, r) -> Fixture:
    shape = ConvShape.from_output(w_out, h_out, c_out, c_in, r, r)
    p = WinogradParams(e, r)
    name = f"wa_e{e}r{r}_cin{c_in}_out{w_out}x{h_out}x{c_out}"
    return Fixture(name, build_winograd_dag(shape, p), "winograd", shape, p)


def corpus() -> dict[str, Fixture]:
    """The bundled tiny-DAG corpus, keyed by fixture name."""
    entries = [
        Fixture("single_vertex", _single_vertex()),
        Fixture("copy_chain2", _copy_chain(1)),
        Fixture("chain4", _copy_chain(4)),
        Fixture("product2", _product2()),
        Fixture("fanout_reduce", _fanout_reduce()),
        Fixture("diamond", _diamond()),
        Fixture("bintree4", _binary_tree(4)),
        Fixture("bintree8", _binary_tree(8)),
        Fixture("bipartite2x3", _bipartite_products(2, 3)),
        Fixture("bipartite3x3", _bipartite_products(3, 3)),
        _dc(1, 1, 1, 2, 1, 1),
        _dc(1, 1, 1, 3, 1, 1),
        _dc(2, 1, 1, 1, 2, 1),
        _dc(1, 1, 1, 1, 3, 1),
        _dc(1, 1, 1, 1, 2, 2),
        _dc(1, 1, 1, 1, 5, 1),
        _wa(1, 1, 1, 1, 1, 1),
        _wa(1, 1, 1, 2, 1, 1),
        _wa(1, 1, 1, 3, 1, 1),
        _wa(1, 1, 2, 1, 1, 1),
    ]
    return {f.name: f for f in entries}


def write_fixture_files(directory) -> list[str]:
    """Dump the corpus in the adjacency text format; returns written paths."""
    import os

    paths = []
    os.makedirs(directory, exist_ok=True)
    for name, fx in corpus().items():
        path = os.path.join(directory, f"{name}.dag")
        fx.dag.save(path)
        paths.append(path)
    return paths


def bundled_fixture_dir() -> str:
    """Directory holding the corpus as shipped adjacency-format files."""
    import os

    return os.path.join(os.path.dirname(__file__), "data")
