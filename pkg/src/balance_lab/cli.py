"""Command-line driver: ``balance-lab <area> <command> [options]``.

Every randomised command requires ``--seed``. Tables go to ``--out`` or
stdout. Exit codes: 0 success, 2 usage or format error, 3 numerical
failure, 4 sampling budget exhausted.
"""
from __future__ import annotations

import argparse
import hashlib
import os
import sys
from pathlib import Path

import numpy as np

from . import contagion as ct
from . import defense as df
from . import formats as fm
from . import fracture as fr
from . import signs as sg
from .errors import BudgetExhaustedError, NumericalError, UsageError
from .netcore import Partition, ShellIndex, kshell_decompose
from .numerics import as_source

EXIT_OK, EXIT_USAGE, EXIT_NUMERICAL, EXIT_BUDGET = 0, 2, 3, 4
THREADS_ENV = "BALANCE_LAB_THREADS"


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _floats(s):
    try:
        return [float(x) for x in s.split(",") if x]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {s!r}") from None


def _ints(s):
    try:
        return [int(x) for x in s.split(",") if x]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {s!r}") from None


_OUTPUTS = {"func", "out", "model_out", "partition_out", "shells_out", "docs_out", "labels_out", "report",
            "groups_out"}
_INPUTS = {"edges", "graph", "model", "matrix", "traces", "partition", "shells", "features", "docs", "labels"}


def _digest(path):
    try:
        return hashlib.sha256(Path(path).read_bytes()).hexdigest()[:16]
    except OSError:
        return None


def _config(args):
    """Arguments that determine the output.

    Output paths are dropped and input paths are replaced by a digest of
    the file contents, so the same inputs give the same hash anywhere.
    """
    cfg = {}
    for k, v in sorted(vars(args).items()):
        if k in _OUTPUTS:
            continue
        if k in _INPUTS and v is not None:
            v = [_digest(x) for x in v] if isinstance(v, list) else _digest(v)
        cfg[k] = v
    return cfg


def _out(args):
    return args.out if args.out else sys.stdout


def _seeded(p):
    p.add_argument("--seed", type=int, required=True, help="random seed (required)")


# ---------------------------------------------------------------------------
# esp
# ---------------------------------------------------------------------------

def _esp_data(g, n_labeled, seed):
    E = g.edge_array()
    if n_labeled is not None:
        if seed is None:
            raise UsageError("--n-labeled needs --seed to choose the revealed edges")
        E = E[as_source(seed).child("reveal").permutation(len(E))]
    if n_labeled is None:
        n_labeled = len(E)
    if not 0 <= n_labeled <= len(E):
        raise UsageError(f"--n-labeled must lie in [0, {len(E)}]")
    X = sg.build_feature_matrix(g, E[:, :2])
    return sg.LabeledEdgeSet(E[:, :2], X, E[:n_labeled, 2].astype(float))


def cmd_esp_train(args):
    g = fm.read_signed_edges(args.edges)
    data = _esp_data(g, args.n_labeled, args.seed)
    model = sg.esp_train(data, beta1=args.beta1, beta2=args.beta2, tol=args.tol, transform=args.transform)
    fm.save_model(args.out, model, _config(args))


def cmd_esp_predict(args):
    model, _ = fm.load_model(args.model, "esp")
    g = fm.read_signed_edges(args.graph)
    q = fm.read_signed_edges(args.edges, n=g.n).edge_array()
    X = sg.build_feature_matrix(g, q[:, :2])
    score = sg._apply(X, model.transform, model.scale) @ model.c
    pred = sg.esp_predict(model, X)
    rows = [(u, v, s, sc, p) for (u, v, s), sc, p in zip(q.tolist(), score, pred)]
    acc = float(np.mean(pred == q[:, 2]))
    fm.write_table(_out(args), ["u", "v", "sign", "score", "predicted"], rows, _config(args),
                   notes=[f"accuracy={acc!r}"])


def cmd_esp_evaluate(args):
    g = fm.read_signed_edges(args.edges)
    if args.sample:
        n_pos, n_neg = args.sample
        sample = sg.make_balanced_edge_sample(g, n_pos, n_neg, as_source(args.seed).child("sample"))
    else:
        E = g.edge_array()
        sample = sg.LabeledEdgeSet(E[:, :2], sg.build_feature_matrix(g, E[:, :2]), E[:, 2].astype(float))
    res = sg.evaluate_esp(sample, args.schedule, args.trials, as_source(args.seed).child("evaluate"),
                          args.beta1, args.beta2, args.tol, args.transform, baseline=args.baseline)
    if args.baseline:
        rows = [(name, r.n_labeled, r.mean, r.std, r.trials) for name in ("esp", "logistic") for r in res[name]]
        header = ["method", "n_l", "mean_accuracy", "stddev", "trials"]
    else:
        rows = [(r.n_labeled, r.mean, r.std, r.trials) for r in res["esp"]]
        header = ["n_l", "mean_accuracy", "stddev", "trials"]
    fm.write_table(_out(args), header, rows, _config(args))


def cmd_esp_planted(args):
    g, groups = sg.planted_balance_graph(args.n, args.edge_prob, args.noise, args.seed)
    fm.write_signed_edges(args.out, g.edges())


def _esp_common(p):
    p.add_argument("--beta1", type=float, default=0.1)
    p.add_argument("--beta2", type=float, default=0.5)
    p.add_argument("--tol", type=float, default=1e-8)
    p.add_argument("--transform", choices=sg.TRANSFORMS, default="colnorm")


def _add_esp(sub):
    esp = sub.add_parser("esp", help="edge-sign prediction").add_subparsers(dest="command", required=True)
    p = esp.add_parser("train", help="fit ESP on a signed edge list")
    p.add_argument("--edges", required=True)
    p.add_argument("--n-labeled", type=int, default=None,
                   help="reveal only this many labels, chosen with --seed (default: all)")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True, help="model file")
    _esp_common(p)
    p.set_defaults(func=cmd_esp_train)

    p = esp.add_parser("predict", help="score edges against a context graph")
    p.add_argument("--model", required=True)
    p.add_argument("--graph", required=True, help="signed edge list giving the network context")
    p.add_argument("--edges", required=True, help="edges to score (sign column used for accuracy)")
    p.add_argument("--out")
    p.set_defaults(func=cmd_esp_predict)

    p = esp.add_parser("evaluate", help="accuracy against the number of labelled edges")
    p.add_argument("--edges", required=True)
    p.add_argument("--sample", type=_ints, default=None, metavar="POS,NEG",
                   help="draw a balanced sample of this many positive and negative edges")
    p.add_argument("--schedule", type=_ints, default=[0, 10, 20, 50, 100, 200])
    p.add_argument("--trials", type=int, default=10)
    p.add_argument("--baseline", action="store_true", help="add the logistic comparator")
    p.add_argument("--out")
    _seeded(p)
    _esp_common(p)
    p.set_defaults(func=cmd_esp_evaluate)

    p = esp.add_parser("planted", help="write a planted two-group signed digraph")
    p.add_argument("--n", type=int, default=500)
    p.add_argument("--edge-prob", type=float, default=0.1)
    p.add_argument("--noise", type=float, default=0.1)
    p.add_argument("--out", required=True)
    _seeded(p)
    p.set_defaults(func=cmd_esp_planted)


# ---------------------------------------------------------------------------
# fracture
# ---------------------------------------------------------------------------

def _write_split(args, pred: fr.FracturePrediction):
    notes = [f"t_sing={pred.t_sing!r}", f"balanced={fm._fmt(pred.balanced)}",
             f"blew_up={fm._fmt(pred.blew_up)}"]
    fm.write_table(_out(args), ["entity", "group"], enumerate(pred.groups.tolist()), _config(args), notes)


def _sim_params(args):
    return {"step_tol": args.step_tol, "blowup_threshold": args.threshold, "horizon": args.horizon}


def cmd_fracture_simulate(args):
    Zp = fm.read_relation_matrix(args.matrix)
    if not Zp.fully_known:
        raise UsageError(f"{args.matrix}: has unknown entries; use 'fracture predict-split'")
    _write_split(args, fr.simulate_fracture(Zp.Z, **_sim_params(args)))


def cmd_fracture_predict_split(args):
    Zp = fm.read_relation_matrix(args.matrix)
    pred = fr.predict_split(Zp, {"beta1": args.beta1, "beta2": args.beta2}, **_sim_params(args))
    _write_split(args, pred)


def cmd_fracture_karate(args):
    g, faction = fr.load_karate()
    rows = []
    for d in args.deltas:
        pred = fr.simulate_fracture(fr.karate_relation_matrix(d, g), **_sim_params(args))
        rows.append((d, fr.split_agreement(pred.groups, faction), pred.t_sing, pred.balanced))
    fm.write_table(_out(args), ["delta", "agreement", "t_sing", "balanced"], rows, _config(args))


def cmd_fracture_planted(args):
    rng = as_source(args.seed)
    Z, groups = fr.planted_relation_matrix(args.n, rng.child("matrix"))
    known = np.ones_like(Z, dtype=bool)
    if args.known_rows is not None:
        rows = np.sort(rng.child("known").choice(args.n, size=args.known_rows, replace=False))
        known[:] = False
        known[rows, :] = True
        known[:, rows] = True
        np.fill_diagonal(known, True)
    fm.write_relation_matrix(args.out, Z, known)
    if args.groups_out:
        fm.write_node_values(args.groups_out, "group", groups, _config(args))


def _fracture_common(p):
    p.add_argument("--step-tol", type=float, default=1e-10)
    p.add_argument("--threshold", type=float, default=1e6, help="blow-up threshold on max |Z|")
    p.add_argument("--horizon", type=float, default=100.0)
    p.add_argument("--out")


def _add_fracture(sub):
    fx = sub.add_parser("fracture", help="balance dynamics and group splits").add_subparsers(
        dest="command", required=True)
    p = fx.add_parser("simulate", help="integrate a fully known relation matrix")
    p.add_argument("--matrix", required=True)
    _fracture_common(p)
    p.set_defaults(func=cmd_fracture_simulate)

    p = fx.add_parser("predict-split", help="complete unknown relations, then integrate")
    p.add_argument("--matrix", required=True)
    p.add_argument("--beta1", type=float, default=0.1)
    p.add_argument("--beta2", type=float, default=0.5)
    _fracture_common(p)
    p.set_defaults(func=cmd_fracture_predict_split)

    p = fx.add_parser("karate", help="agreement with the historical club split across delta")
    p.add_argument("--deltas", type=_floats, default=list(fr.DELTA_SWEEP))
    _fracture_common(p)
    p.set_defaults(func=cmd_fracture_karate)

    p = fx.add_parser("planted", help="write a planted two-group relation matrix")
    p.add_argument("--n", type=int, default=17)
    p.add_argument("--known-rows", type=int, default=None,
                   help="keep only this many entities' rows known; the rest become '?'")
    p.add_argument("--out", required=True)
    p.add_argument("--groups-out", default=None)
    _seeded(p)
    p.set_defaults(func=cmd_fracture_planted)


# ---------------------------------------------------------------------------
# contagion
# ---------------------------------------------------------------------------

def _netcfg(args):
    return ct.NetworkGenConfig(n=args.n, n_communities=args.communities, p_in=args.p_in, p_out=args.p_out,
                               skew=args.skew, core_boost=args.core_boost)


def _curves(args):
    if not args.curve:
        return ct.default_curve_family()
    return tuple(ct.InfluenceCurve(c) for c in args.curve)


def cmd_contagion_netgen(args):
    net = ct.generate_network(_netcfg(args), args.seed, diagnostics=args.diagnostics)
    fm.write_undirected_edges(args.out, net.graph)
    cfg = _config(args)
    if args.partition_out:
        fm.write_node_values(args.partition_out, "community", net.planted.labels, cfg)
    if args.shells_out:
        fm.write_node_values(args.shells_out, "shell", kshell_decompose(net.graph).shells, cfg)
    if args.diagnostics:
        d = net.diagnostics
        fm.write_table(sys.stdout, ["statistic", "value"], sorted(d.items()), cfg)


def cmd_contagion_simulate(args):
    g = fm.read_undirected_edges(args.graph)
    curve = ct.InfluenceCurve(args.curve_probs)
    tr = ct.simulate_contagion(g, curve, args.seeds, args.horizon, args.seed, sequential=args.sequential)
    fm.write_trace(_out(args), tr, _config(args))


def _structure(args):
    if not args.partition or not args.shells:
        raise UsageError("features need both --partition and --shells")
    return (Partition(fm.read_node_values(args.partition, "community")),
            ShellIndex(fm.read_node_values(args.shells, "shell")))


def cmd_contagion_features(args):
    part, shells = _structure(args)
    rows = []
    for path in args.traces:
        tr = fm.read_trace(path)
        for tau in args.taus:
            delta = args.delta if args.delta is not None else max(1, int(tau))
            f = ct.compute_ew_features(tr, tau, delta, None, part, shells)
            rows.append((Path(path).name, tau) + tuple(f.as_array()))
    fm.write_table(_out(args), ["trace", "tau"] + list(ct.FEATURE_NAMES), rows, _config(args))


def cmd_contagion_corpus(args):
    rng = as_source(args.seed)
    corpus = ct.build_ew_corpus(_netcfg(args), _curves(args), args.n_viral, args.n_dissipating,
                                rng.child("corpus"), horizon=args.horizon, n_seeds=args.n_seeds,
                                budget=args.budget)
    cfg = _config(args)
    X = ct.corpus_features(corpus, args.taus, args.delta)
    header = ["trace", "label"] + [f"{n}@{t:g}" for t in args.taus for n in ct.FEATURE_NAMES]
    rows = [(i, int(lab)) + tuple(x) for i, (lab, x) in enumerate(zip(corpus.labels, X))]
    fm.write_table(args.out, header, rows, cfg, notes=[f"attempts={corpus.attempts}"])
    if args.report:
        # accuracy against tau for the full and the dynamics-only feature sets
        rep = []
        for tau in args.taus:
            Xt = ct.corpus_features(corpus, [tau], args.delta)
            acc4, imp = ct.cross_validate(Xt, corpus.labels, rng.child(f"cv-{tau}"))
            acc2, _ = ct.cross_validate(Xt[:, :2], corpus.labels, rng.child(f"cv-{tau}"))
            rep.append((tau, acc4, acc2) + tuple(imp))
        fm.write_table(args.report, ["tau", "accuracy_ew", "accuracy_dynamics"]
                       + [f"importance_{n}" for n in ct.FEATURE_NAMES], rep, cfg)


def _feature_table(path):
    header, rows = fm.read_table(path)
    if len(header) < 3 or header[:2] != ["trace", "label"]:
        raise UsageError(f"{path}: header must start with 'trace,label'")
    try:
        X = np.array([[float(v) for v in r[2:]] for r in rows])
        y = np.array([int(r[1]) for r in rows])
    except ValueError as e:
        raise UsageError(f"{path}: {e}") from None
    return header[2:], [r[0] for r in rows], X, y


def cmd_contagion_train(args):
    names, _, X, y = _feature_table(args.features)
    wanted = args.columns.split(",") if args.columns else names
    unknown = [c for c in wanted if c not in names]
    if unknown:
        raise UsageError(f"unknown feature column {unknown[0]!r}")
    cols = [names.index(c) for c in wanted]
    model = ct.train_ensemble(X[:, cols], y, n_trees=args.trees, max_depth=args.max_depth,
                              rng=args.seed, min_leaf=args.min_leaf,
                              feature_names=tuple(names[c] for c in cols))
    fm.save_model(args.out, model, _config(args))


def cmd_contagion_classify(args):
    model, _ = fm.load_model(args.model, "ensemble")
    names, ids, X, y = _feature_table(args.features)
    try:
        cols = [names.index(n) for n in model.feature_names]
    except ValueError:
        raise UsageError(f"{args.features}: lacks columns {list(model.feature_names)}") from None
    rows = [(i, ct.ew_classify(model, x[cols])) for i, x in zip(ids, X)]
    acc = float(np.mean(model.predict(X[:, cols]) == y))
    fm.write_table(_out(args), ["trace", "decision"], rows, _config(args), notes=[f"accuracy={acc!r}"])


def _net_args(p, cfg=ct.EW_NETWORK):
    p.add_argument("--n", type=int, default=cfg.n)
    p.add_argument("--communities", type=int, default=cfg.n_communities)
    p.add_argument("--p-in", type=float, default=cfg.p_in)
    p.add_argument("--p-out", type=float, default=cfg.p_out)
    p.add_argument("--skew", type=float, default=cfg.skew)
    p.add_argument("--core-boost", type=float, default=cfg.core_boost)


def _add_contagion(sub):
    cx = sub.add_parser("contagion", help="complex contagion and early warning").add_subparsers(
        dest="command", required=True)
    p = cx.add_parser("netgen", help="generate a community network")
    _net_args(p)
    p.add_argument("--out", required=True, help="undirected edge list")
    p.add_argument("--partition-out", default=None)
    p.add_argument("--shells-out", default=None)
    p.add_argument("--diagnostics", action="store_true", help="print structural statistics")
    _seeded(p)
    p.set_defaults(func=cmd_contagion_netgen)

    p = cx.add_parser("simulate", help="run one contagion and write its trace")
    p.add_argument("--graph", required=True)
    p.add_argument("--curve-probs", type=_floats, required=True, metavar="P0,P1,...")
    p.add_argument("--seeds", type=_ints, required=True, metavar="V1,V2,...")
    p.add_argument("--horizon", type=int, default=200)
    p.add_argument("--sequential", action="store_true")
    p.add_argument("--out")
    _seeded(p)
    p.set_defaults(func=cmd_contagion_simulate)

    p = cx.add_parser("features", help="early-warning features of traces")
    p.add_argument("--traces", nargs="+", required=True)
    p.add_argument("--partition")
    p.add_argument("--shells")
    p.add_argument("--taus", type=_floats, default=[10.0])
    p.add_argument("--delta", type=float, default=None, help="rate window (default: tau)")
    p.add_argument("--out")
    p.set_defaults(func=cmd_contagion_features)

    p = cx.add_parser("corpus", help="sample viral and dissipating traces and tabulate features")
    _net_args(p)
    p.add_argument("--curve", type=_floats, action="append", metavar="P0,P1,...",
                   help="influence curve (repeatable; default: the built-in family)")
    p.add_argument("--n-viral", type=int, default=100)
    p.add_argument("--n-dissipating", type=int, default=100)
    p.add_argument("--horizon", type=int, default=200)
    p.add_argument("--n-seeds", type=int, default=6)
    p.add_argument("--budget", type=int, default=20000)
    p.add_argument("--taus", type=_floats, default=[10.0])
    p.add_argument("--delta", type=float, default=None)
    p.add_argument("--out", required=True, help="feature table")
    p.add_argument("--report", default=None, help="write cross-validated accuracy against tau here")
    _seeded(p)
    p.set_defaults(func=cmd_contagion_corpus)

    p = cx.add_parser("train", help="fit the tree ensemble on a feature table")
    p.add_argument("--features", required=True)
    p.add_argument("--columns", default=None, help="comma-separated feature columns (default: all)")
    p.add_argument("--trees", type=int, default=50)
    p.add_argument("--max-depth", type=int, default=4)
    p.add_argument("--min-leaf", type=int, default=5)
    p.add_argument("--out", required=True)
    _seeded(p)
    p.set_defaults(func=cmd_contagion_train)

    p = cx.add_parser("classify", help="alert decisions for a feature table")
    p.add_argument("--model", required=True)
    p.add_argument("--features", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_contagion_classify)


# ---------------------------------------------------------------------------
# defense
# ---------------------------------------------------------------------------

def _docs(args, vocabulary=None):
    ids, bags = fm.read_documents(args.docs)
    if vocabulary is None:
        vocabulary = sorted({w for b in bags for w in b})
    X = fm.bags_to_matrix(bags, vocabulary)
    y = fm.read_labels(args.labels, ids) if getattr(args, "labels", None) else None
    return ids, X, y, vocabulary


def _game(args):
    return df.GameParams(alpha=args.alpha, beta=args.beta, exponent=args.exponent, scope=args.scope,
                         method=args.method)


def cmd_defense_reduce(args):
    ids, X, _, vocab = _docs(args)
    space = df.fit_reduction(X, args.k, tag="cli")
    Z = space.project(X)
    rows = [(d,) + tuple(z) for d, z in zip(ids, Z)]
    fm.write_table(_out(args), ["doc_id"] + [f"z{j}" for j in range(space.k)], rows, _config(args))


def cmd_defense_train(args):
    ids, X, y, vocab = _docs(args)
    model = df.pd_train(X, y, _game(args), k=args.k, rng=args.seed)
    fm.save_model(args.out, model, _config(args), extra={"vocabulary": vocab})


def cmd_defense_predict(args):
    model, extra = fm.load_model(args.model, "defense")
    ids, X, y, _ = _docs(args, extra["vocabulary"])
    pred = df.pd_predict(model, X)
    notes = [f"accuracy={float(np.mean(pred == y))!r}"] if y is not None else []
    fm.write_table(_out(args), ["doc_id", "label"], [(d, f"{p:+d}") for d, p in zip(ids, pred)],
                   _config(args), notes)


def cmd_defense_attack(args):
    model, extra = fm.load_model(args.model, "defense")
    ids, X, y, _ = _docs(args, extra["vocabulary"])
    Z = model.space.project(X)
    res = df.attack_best_response(model.w, Z, y, args.alpha, model.params.exponent, args.scope,
                                  rng=args.seed)
    Za = df.apply_attack(Z, y, res.a, args.scope)
    acc = float(np.mean(np.where(Za @ model.w > 0, 1, -1) == y))
    notes = [f"objective={res.objective!r}", f"clamped={fm._fmt(res.clamped)}", f"attacked_accuracy={acc!r}"]
    fm.write_table(_out(args), ["component", "shift"], enumerate(res.a.tolist()), _config(args), notes)


def cmd_defense_drift_eval(args):
    rows, drop = [], {}
    methods = args.methods
    for s in args.seeds:
        stream = df.make_drift_stream(args.bins, args.drift, s, per_class=args.per_class,
                                      doc_length=args.doc_length)
        trainers = {}
        if "pd" in methods:
            trainers["pd"] = df.pd_trainer(_game(args), args.k, s)
        if "nb" in methods:
            trainers["nb"] = df.nb_trainer()
        r, d = df.drift_eval(stream, trainers)
        rows.extend((s, b, m, a) for b, m, a in r)
        drop.update({(s, m): v for m, v in d.items()})
    notes = [f"drop[{m}]={np.mean([drop[(s, m)] for s in args.seeds])!r}" for m in methods]
    fm.write_table(_out(args), ["seed", "bin", "method", "accuracy"], rows, _config(args), notes)


def cmd_defense_randomized(args):
    rng = as_source(args.seed)
    if args.docs:
        ids, X, y, _ = _docs(args)
        perm = rng.child("split").permutation(len(y))
        half = len(y) // 2
        space = df.fit_reduction(X[perm[:half]], args.k, tag="cli")
        Z = space.project(X)
        Ztr, ytr, Zte, yte = Z[perm[:half]], y[perm[:half]], Z[perm[half:]], y[perm[half:]]
    else:
        Z, y = df.make_spam_like(args.per_class, args.k, rng=rng.child("data"))
        half = len(y) // 2
        Ztr, ytr, Zte, yte = Z[:half], y[:half], Z[half:], y[half:]
    grid = df.randomized_grid(Ztr, ytr, Zte, yte, args.alpha, args.m, args.subset_size, args.beta,
                              args.exponent, args.scope, rng.child("grid"))
    rows = [(d, grid[(d, "nominal")], grid[(d, "attacked")]) for d in ("single", "randomized")]
    fm.write_table(_out(args), ["defense", "nominal", "attacked"], rows, _config(args))


def cmd_defense_stream(args):
    stream = df.make_drift_stream(args.bins, args.drift, args.seed, per_class=args.per_class,
                                  doc_length=args.doc_length)
    if not 0 <= args.bin < len(stream.bins):
        raise UsageError(f"--bin must lie in [0, {len(stream.bins) - 1}]")
    X, y = stream.bins[args.bin]
    ids = [f"b{args.bin}-d{i}" for i in range(len(y))]
    vocab = [f"w{j}" for j in range(X.shape[1])]
    fm.write_documents(args.docs_out, ids, X, vocab)
    fm.write_labels(args.labels_out, ids, y)


def _game_args(p, alpha=0.001):
    p.add_argument("--alpha", type=float, default=alpha, help="attack cost weight")
    p.add_argument("--beta", type=float, default=0.1, help="filter regularisation weight")
    p.add_argument("--exponent", type=int, choices=(2, 3), default=3)
    p.add_argument("--scope", choices=df.SCOPES, default="all")


def _stream_args(p):
    p.add_argument("--bins", type=int, default=16)
    p.add_argument("--drift", type=float, default=0.6)
    p.add_argument("--per-class", type=int, default=500)
    p.add_argument("--doc-length", type=int, default=1000)


def _add_defense(sub):
    dx = sub.add_parser("defense", help="predictive spam defense").add_subparsers(dest="command", required=True)
    p = dx.add_parser("reduce", help="project documents onto their top singular directions")
    p.add_argument("--docs", required=True)
    p.add_argument("--k", type=int, default=20)
    p.add_argument("--out")
    p.set_defaults(func=cmd_defense_reduce)

    p = dx.add_parser("train", help="train the filter against anticipated attacks")
    p.add_argument("--docs", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--k", type=int, default=20)
    p.add_argument("--method", choices=("leader", "alternating"), default="leader")
    p.add_argument("--out", required=True)
    _game_args(p)
    _seeded(p)
    p.set_defaults(func=cmd_defense_train)

    p = dx.add_parser("predict", help="label documents with a trained filter")
    p.add_argument("--model", required=True)
    p.add_argument("--docs", required=True)
    p.add_argument("--labels", default=None, help="optional, to report accuracy")
    p.add_argument("--out")
    p.set_defaults(func=cmd_defense_predict)

    p = dx.add_parser("attack", help="best shift against a trained filter")
    p.add_argument("--model", required=True)
    p.add_argument("--docs", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--alpha", type=float, default=0.001)
    p.add_argument("--scope", choices=df.SCOPES, default="all")
    p.add_argument("--out")
    _seeded(p)
    p.set_defaults(func=cmd_defense_attack)

    p = dx.add_parser("drift-eval", help="train on bin 0 of a drifting stream, score every bin")
    _stream_args(p)
    p.add_argument("--methods", type=lambda s: s.split(","), default=["pd", "nb"])
    p.add_argument("--k", type=int, default=20)
    p.add_argument("--method", choices=("leader", "alternating"), default="leader")
    p.add_argument("--seeds", type=_ints, required=True, help="comma-separated stream seeds")
    p.add_argument("--out")
    _game_args(p)
    p.set_defaults(func=cmd_defense_drift_eval)

    p = dx.add_parser("randomized", help="nominal and attacked accuracy of single and randomized filters")
    p.add_argument("--docs", default=None, help="documents (default: synthetic Spam-like data)")
    p.add_argument("--labels", default=None)
    p.add_argument("--per-class", type=int, default=1000)
    p.add_argument("--k", type=int, default=20)
    p.add_argument("--m", type=int, default=2, help="number of feature subsets")
    p.add_argument("--subset-size", type=int, default=10)
    p.add_argument("--out")
    _game_args(p, alpha=10.0)
    _seeded(p)
    p.set_defaults(func=cmd_defense_randomized)

    p = dx.add_parser("stream", help="write one bin of a drifting stream as documents and labels")
    _stream_args(p)
    p.add_argument("--bin", type=int, default=0)
    p.add_argument("--docs-out", required=True)
    p.add_argument("--labels-out", required=True)
    _seeded(p)
    p.set_defaults(func=cmd_defense_stream)


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------

def build_parser():
    parser = _Parser(prog="balance-lab", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="area", required=True, parser_class=_Parser)
    _add_esp(sub)
    _add_fracture(sub)
    _add_contagion(sub)
    _add_defense(sub)
    return parser


def _limit_threads():
    n = os.environ.get(THREADS_ENV)
    if not n:
        return None
    try:
        n = int(n)
    except ValueError:
        raise UsageError(f"{THREADS_ENV} must be a positive integer, got {n!r}") from None
    if n < 1:
        raise UsageError(f"{THREADS_ENV} must be a positive integer")
    from threadpoolctl import threadpool_limits

    return threadpool_limits(limits=n)


def main(argv=None):
    try:
        args = build_parser().parse_args(argv)
        limiter = _limit_threads()
        try:
            args.func(args)
        finally:
            if limiter is not None:
                limiter.restore_original_limits()
    except UsageError as e:
        print(f"balance-lab: error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except NumericalError as e:
        print(f"balance-lab: numerical failure: {e}", file=sys.stderr)
        return EXIT_NUMERICAL
    except BudgetExhaustedError as e:
        print(f"balance-lab: budget exhausted: {e} (achieved {e.achieved})", file=sys.stderr)
        return EXIT_BUDGET
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
