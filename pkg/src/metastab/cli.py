"""Batch front end: check -> classify -> label -> predict -> solve ->
quasimode -> validate -> simulate, driven by a JSON potential spec file.

Every artifact starts with the manifest hash so runs are attributable;
`all` runs the stages in pipeline order and is byte-identical to running
them one by one with the same seed.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import math
import os
import sys

import numpy as np

from . import kramers, quasimodes, sde, spectral
from .labeling import (FICTIVE_SADDLE, SaddleRecord, check_generic,
                       run_labeling)
from .manifolds import (classify_index, manifold_from_decl,
                        negative_direction_field, verify_critical)
from .potential import check_confinement, load_spec_file, parse_potential
from .sublevel import classify_separating, sample_grid

COMMANDS = ("check", "classify", "label", "predict", "solve", "quasimode",
            "validate", "simulate", "all")
DEFAULT_H = (0.2, 0.15, 0.1, 0.05)


def _manifest_hash(spec_data, args):
    payload = json.dumps({"spec": spec_data, "h": args.h, "grid": args.grid,
                          "seed": args.seed, "strict": args.strict},
                         sort_keys=True)
    return hashlib.sha256(payload.encode()).hexdigest()[:16]


def _min_separation(manifolds):
    best = np.inf
    for i, a in enumerate(manifolds):
        for b in manifolds[i + 1:]:
            d = np.min(np.linalg.norm(
                a.nodes[:, None, :] - b.nodes[None, :, :], axis=-1))
            best = min(best, float(d))
    return best


class Pipeline:
    """Holds shared state across stages for one manifest."""

    def __init__(self, args):
        self.args = args
        self.spec = load_spec_file(args.spec)
        self.hash = _manifest_hash(self.spec, args)
        self.p = parse_potential(self.spec["expression"], self.spec["dim"])
        self.box = np.asarray(self.spec["box"], dtype=float)
        self.h_list = args.h
        os.makedirs(args.out, exist_ok=True)
        self.minima = []
        self.saddle_records = []
        self.saddle_manifolds = {}
        for decl in self.spec["manifolds"]:
            M = manifold_from_decl(decl, self.p.dim)
            M.meta["decl"] = decl
            role = decl.get("role")
            if role == "minimum":
                self.minima.append(M)
            elif role == "saddle":
                self.saddle_manifolds[M.name] = M
            else:
                raise SystemExit(f"manifold {M.name}: role must be "
                                 "'minimum' or 'saddle'")
        self.grid = None
        self.labeling = None
        self.eigs = {}          # h -> EigenResult
        self.witten = {}        # h -> DiscreteWitten
        self.predictions = None

    # -- helpers ------------------------------------------------------------

    def _out(self, name):
        return os.path.join(self.args.out, name)

    def _grid_shape(self):
        if self.args.grid:
            return tuple(self.args.grid) if len(self.args.grid) > 1 \
                else self.args.grid[0]
        return None

    def ensure_grid(self):
        if self.grid is None:
            self.grid = sample_grid(self.p, self.box, self._grid_shape())
        return self.grid

    def default_radius(self, M):
        others = [m for m in self.minima if m.name != M.name]
        others += [s for s in self.saddle_manifolds.values()
                   if s.name != M.name]
        return _min_separation([M] + others) / 4.0 if others else 0.25

    # -- stages -------------------------------------------------------------

    def check(self):
        rep = check_confinement(self.p, self.box)
        print(f"# manifest {self.hash}")
        print(rep.summary())
        if not rep.passed:
            raise SystemExit("confinement check failed")

    def classify(self):
        g = self.ensure_grid()
        lines = [f"# manifest {self.hash}"]
        for M in self.minima:
            res = verify_critical(self.p, M)
            if not res.ok:
                raise SystemExit(f"{M.name}: {'; '.join(res.messages)}")
            idx = classify_index(self.p, M)
            if idx != 0:
                raise SystemExit(f"{M.name}: declared minimum has index {idx}")
            lines.append(f"{M.name}: minimum, f = {M.value:.9g}")
        self.saddle_records = []
        for M in self.saddle_manifolds.values():
            res = verify_critical(self.p, M)
            if not res.ok:
                raise SystemExit(f"{M.name}: {'; '.join(res.messages)}")
            decl = M.meta["decl"]
            radius = decl.get("radius", self.default_radius(M))
            frame = negative_direction_field(self.p, M)
            if not hasattr(frame, "nu"):
                lines.append(f"{M.name}: NonOrientableNormalLine -> "
                             "NotLocallySeparating")
                continue
            cls = classify_separating(self.p, M, frame, g, radius)
            lines.append(f"{M.name}: index 1, sigma = {M.value:.9g}, "
                         f"{cls.status}")
            self.saddle_records.append(
                SaddleRecord(M, frame, radius, cls))
        print("\n".join(lines))

    def label(self):
        if not self.saddle_records:
            self.classify()
        g = self.ensure_grid()
        self.labeling = run_labeling(self.p, g, self.minima,
                                     self.saddle_records,
                                     require_separating=False)
        gen = check_generic(g, self.labeling, self.minima)
        text = (f"# manifest {self.hash}\n" + self.labeling.report()
                + "\n" + gen.summary() + "\n")
        with open(self._out("labeling.txt"), "w") as fh:
            fh.write(text)
        print(text)
        if self.args.strict and not gen.ok:
            raise SystemExit("genericity check failed in strict mode")

    def predict(self):
        if self.labeling is None:
            self.label()
        self.predictions = kramers.predict_all(
            self.p, self.labeling, self.minima, self.saddle_manifolds)
        path = self._out("predictions.csv")
        kramers.write_prediction_csv(path, self.predictions, self.h_list)
        with open(path) as fh:
            body = fh.read()
        with open(path, "w") as fh:
            fh.write(f"# manifest {self.hash}\n" + body)
        print(f"wrote {path}")

    def solve(self):
        if self.labeling is None:
            self.label()
        k = len(self.minima) + 3
        rows = []
        for h in self.h_list:
            W = spectral.assemble_witten(self.p, self.box,
                                         self._grid_shape() or
                                         self.ensure_grid().shape, h,
                                         strict=self.args.strict)
            res = spectral.smallest_eigs(W, k)
            self.witten[h] = W
            self.eigs[h] = res
            n, ratio = spectral.count_small(res.values, h)
            rows.append([h, "x".join(str(s) for s in W.shape), k,
                         ";".join(f"{v:.12g}" for v in res.values),
                         f"{res.floor:.3g}", n, f"{ratio:.4g}"])
        with open(self._out("spectrum.csv"), "w", newline="") as fh:
            fh.write(f"# manifest {self.hash}\n")
            w = csv.writer(fh)
            w.writerow(["h", "grid", "k", "eigenvalues", "floor",
                        "count_small", "gap_ratio"])
            w.writerows(rows)
        print(f"wrote {self._out('spectrum.csv')}")

    def _quasimode_bundle(self, h):
        g = self.ensure_grid()
        L = self.labeling
        psis = []
        for M in self.minima:
            lab = L.minima[M.name]
            gluings = {}
            for s in lab.saddles:
                if s == FICTIVE_SADDLE:
                    continue
                rec = next(r for r in self.saddle_records if r.name == s)
                decl = rec.manifold.meta["decl"]
                gluings[s] = quasimodes.build_gluing(
                    self.p, rec, lab.component, g, h,
                    tau=decl.get("tau"))
            psis.append(quasimodes.build_psi(
                self.p, M, L, gluings, g, h, other_minima=self.minima))
        return psis

    def quasimode(self):
        if not self.eigs:
            self.solve()
        rows = []
        for h in self.h_list:
            psis = self._quasimode_bundle(h)
            W = self.witten[h]
            IM = quasimodes.interaction_matrix(
                W, psis, _truncate(self.eigs[h], len(psis)), self.labeling)
            mh = np.sort(IM.eigenvalues())
            for j, name in enumerate(IM.names):
                mu = quasimodes.rayleigh(W, psis[
                    [q.minimum for q in psis].index(name)])
                rows.append([h, name, f"{mu:.12g}",
                             ";".join(f"{v:.12g}" for v in mh),
                             f"{np.max(np.abs(IM.gram - np.eye(len(psis)))):.3g}",
                             f"{IM.norm_loss[j]:.3g}"])
        with open(self._out("interaction.csv"), "w", newline="") as fh:
            fh.write(f"# manifest {self.hash}\n")
            w = csv.writer(fh)
            w.writerow(["h", "minimum", "rayleigh", "M_h_eigenvalues",
                        "gram_offdiag_max", "projection_loss"])
            w.writerows(rows)
        print(f"wrote {self._out('interaction.csv')}")

    def validate(self):
        if self.predictions is None:
            self.predict()
        if not self.eigs:
            self.solve()
        tol = self.spec.get("validate_tolerance")
        violated = False
        rows = []
        ordered = [pr for pr in self.predictions]
        for h in self.h_list:
            vals = self.eigs[h].values
            floor = self.eigs[h].floor
            # eigenvalue 0 belongs to the global minimum; predictions are
            # ordered by decreasing depth, so line them up with vals[1:]
            for j, pr in enumerate(sorted(ordered, key=lambda q: -q.barrier)):
                lam_num = vals[1 + j]
                lam_pred = pr.evaluate(h)
                ratio = lam_num / lam_pred if lam_pred > 0 else np.inf
                reliable = lam_num >= floor
                alpha1 = (ratio - 1.0) / math.sqrt(h)
                rows.append([h, pr.minimum, f"{lam_num:.12g}",
                             f"{lam_pred:.12g}", f"{ratio:.6g}",
                             f"{alpha1:.4g}", int(reliable)])
                if tol is not None and reliable and abs(ratio - 1) > tol:
                    violated = True
        with open(self._out("validate.csv"), "w", newline="") as fh:
            fh.write(f"# manifest {self.hash}\n")
            w = csv.writer(fh)
            w.writerow(["h", "minimum", "lambda_num", "lambda_pred",
                        "ratio", "alpha1_fit", "reliable"])
            w.writerows(rows)
        print(f"wrote {self._out('validate.csv')}")
        if violated:
            raise SystemExit("validate: ratio tolerance violated")

    def simulate(self):
        if self.labeling is None:
            self.label()
        g = self.ensure_grid()
        rows = []
        samples = {}
        for M in self.minima:
            lab = self.labeling.minima[M.name]
            if FICTIVE_SADDLE in lab.saddles:
                continue
            samples[M.name] = []
            for h in self.h_list:
                dt = sde.stability_dt(self.p, M.nodes, h)
                lam = kramers.prefactor(
                    self.p, M, self.labeling, self.saddle_manifolds
                ).evaluate(h)
                horizon = 50.0 * h / max(lam, 1e-300)
                cfg = sde.LangevinConfig(
                    h=h, dt=dt, horizon=min(horizon, 1e7), n_paths=2000,
                    seed=self.args.seed, margin=0.05 * lab.depth)
                s = sde.simulate_exit(self.p, M, self.labeling, g, cfg)
                samples[M.name].append(s)
                rows.append([M.name, h, f"{s.mean_exit():.6g}",
                             s.n_censored, s.times.size])
        with open(self._out("exit_times.csv"), "w", newline="") as fh:
            fh.write(f"# manifest {self.hash}\n")
            w = csv.writer(fh)
            w.writerow(["minimum", "h", "mean_exit", "censored", "paths"])
            w.writerows(rows)
        for name, ss in samples.items():
            if len(ss) >= 3:
                fit = sde.arrhenius_fit(ss)
                S = self.labeling.minima[name].depth
                print(json.dumps({"minimum": name, "slope": fit.slope,
                                  "target_2S": 2 * S,
                                  "ci_halfwidth": fit.ci_halfwidth}))
        print(f"wrote {self._out('exit_times.csv')}")

    def run(self, command):
        if command == "all":
            for c in ("check", "classify", "label", "predict", "solve",
                      "quasimode", "validate", "simulate"):
                getattr(self, c)()
        else:
            getattr(self, command)()


def _truncate(eig, k):
    from .spectral import EigenResult
    return EigenResult(values=eig.values[:k], vectors=eig.vectors[:, :k],
                       floor=eig.floor)


def main(argv=None):
    ap = argparse.ArgumentParser(
        prog="metastab",
        description="Eyring-Kramers predictions for Witten Laplacians and "
                    "their numerical cross-validation")
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--spec", required=True, help="potential spec file (JSON)")
    ap.add_argument("--h", type=lambda s: [float(v) for v in s.split(",")],
                    default=list(DEFAULT_H), help="comma-separated h values")
    ap.add_argument("--grid", type=lambda s: [int(v) for v in s.split(",")],
                    default=None, help="grid resolution override N[,N..]")
    ap.add_argument("--out", default=".", help="output directory")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--strict", action="store_true",
                    help="escalate warnings to errors")
    args = ap.parse_args(argv)
    try:
        Pipeline(args).run(args.command)
    except SystemExit:
        raise
    except (ValueError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
