"""Build the prism cover of one tube and print its audit.

Usage: python scripts/prism_audit.py a b c t delta [--samples N]

d is solved from ad - bc = 1, so a must be nonzero.
"""

import argparse

from sl2lab.decomp import audit_prisms, prism_decomposition
from sl2lab.sl2_core import make_line


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    for name in ("a", "b", "c", "t", "delta"):
        ap.add_argument(name, type=float)
    ap.add_argument("--samples", type=int, default=100_000)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    line = make_line(args.a, args.b, args.c, (1 + args.b * args.c) / args.a)
    prisms = prism_decomposition(line, args.t, args.delta)
    audit = audit_prisms(line, prisms, args.t, args.delta, n_samples=args.samples,
                         rng=args.seed)
    print(f"line {tuple(round(float(v), 6) for v in line.params)}")
    print(f"prisms {audit.count} (nominal {audit.nominal_count:.0f})")
    print(f"misses {audit.misses}/{args.samples}")
    print(f"max multiplicity {audit.max_multiplicity}")
    print(f"max vertex distance {audit.max_vertex_distance / args.t:.3f} t")


if __name__ == "__main__":
    main()
