"""Command-line interface.

Subcommands: gen-world, train proxy|dqn, eval, inspect. Every command
writes a manifest next to its outputs; identical flags and seeds
reproduce byte-identical primary outputs.
"""

from __future__ import annotations

import csv
import json
import os
import sys
from pathlib import Path

import click
import numpy as np

from . import bayes, evaluate, report, rl, world as world_mod
from .actionset import DEFAULT_N_ACTIONS
from .manifest import load_manifest, write_manifest
from .nets import Mlp
from .pdv import PdvError
from .planner import (
    VARIANTS,
    ClassifierIlcProvider,
    DqnPlanner,
    EpisodeEnvironment,
    RandomPlanner,
    SingleViewPlanner,
)
from .proxy import (
    ActionClassifier,
    ProxyTrainConfig,
    build_proxy_dataset,
    train_action_classifier,
)
from .rl import DqnConfig, train_dqn
from .world import Domain, WorldConfig, WorldConfigError, generate_world, load_world, save_world

EXIT_RUNTIME = 1
EXIT_CONFIG = 2


def _out_dir(path: str | None) -> Path:
    base = path or os.environ.get("ACTIVEVPR_OUT") or "."
    p = Path(base)
    p.mkdir(parents=True, exist_ok=True)
    return p


def _fail_config(msg: str):
    click.echo(f"error: {msg}", err=True)
    sys.exit(EXIT_CONFIG)


def _fail_runtime(msg: str):
    click.echo(f"error: {msg}", err=True)
    sys.exit(EXIT_RUNTIME)


def _parse_domain(spec: str) -> Domain:
    # id:shift[:seed]
    parts = spec.split(":")
    if len(parts) < 2:
        raise WorldConfigError(f"domain spec {spec!r} must be id:shift[:seed]")
    return Domain(
        id=parts[0],
        shift_strength=float(parts[1]),
        seed=int(parts[2]) if len(parts) > 2 else 0,
    )


@click.group()
@click.version_option()
def main():
    """Active place recognition: worlds, trainers, and the benchmark harness."""


# ---------------------------------------------------------------------------
# gen-world
# ---------------------------------------------------------------------------

@main.command("gen-world")
@click.option("--viewpoints", type=int, default=400, show_default=True)
@click.option("--place-len", type=int, default=25, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--confusion-diag", type=float, default=0.85, show_default=True)
@click.option("--confusion-twin", type=float, default=0.0, show_default=True,
              help="Confusion mass placed on each class's twin partner.")
@click.option("--featureless-fraction", type=float, default=0.3, show_default=True)
@click.option("--run-min", type=int, default=40, show_default=True)
@click.option("--run-max", type=int, default=80, show_default=True)
@click.option("--featureless-degree", type=float, default=1.0, show_default=True)
@click.option("--descriptor-noise", type=float, default=0.05, show_default=True)
@click.option("--descriptor-shift-scale", type=float, default=1.0, show_default=True,
              help="How strongly domain shift inflates descriptor noise.")
@click.option("--descriptor-shift-jitter", type=float, default=0.0, show_default=True,
              help="Per-capture uniform extra descriptor shift in every domain.")
@click.option("--base-observation-shift", type=float, default=0.0, show_default=True,
              help="Intrinsic observation noise present in every domain.")
@click.option("--appearance-group", type=int, default=1, show_default=True,
              help="Number of distant places sharing one descriptor class.")
@click.option("--domain", "domain_specs", multiple=True,
              help="Extra domain as id:shift[:seed]; repeatable. 'train:0' is always present.")
@click.option("-o", "--output", required=True, type=click.Path())
def cmd_gen_world(viewpoints, place_len, seed, confusion_diag, confusion_twin,
                  featureless_fraction,
                  run_min, run_max, featureless_degree, descriptor_noise,
                  descriptor_shift_scale, descriptor_shift_jitter,
                  base_observation_shift, appearance_group, domain_specs, output):
    """Generate a synthetic trajectory world file."""
    try:
        cfg = WorldConfig(
            n_viewpoints=viewpoints,
            place_len_m=place_len,
            confusion_diag=confusion_diag,
            confusion_twin=confusion_twin,
            featureless_fraction=featureless_fraction,
            featureless_run_min_m=run_min,
            featureless_run_max_m=run_max,
            featureless_degree=featureless_degree,
            descriptor_noise_sigma=descriptor_noise,
            descriptor_shift_scale=descriptor_shift_scale,
            descriptor_shift_jitter=descriptor_shift_jitter,
            base_observation_shift=base_observation_shift,
            appearance_group=appearance_group,
        )
        domains = [world_mod.TRAIN_DOMAIN] + [_parse_domain(s) for s in domain_specs]
        w = generate_world(cfg, seed, domains=domains)
        save_world(w, output)
    except (WorldConfigError, ValueError) as exc:
        _fail_config(str(exc))
    write_manifest(
        Path(output).with_suffix(".manifest.json"),
        command="gen-world",
        config={**cfg.__dict__, "seed": seed,
                "domains": [d.__dict__ for d in domains]},
        outputs={"world": output},
    )
    click.echo(f"wrote {output}: {w.n_viewpoints} viewpoints, {w.n_places} places")


# ---------------------------------------------------------------------------
# train
# ---------------------------------------------------------------------------

@main.group("train")
def train_group():
    """Train the proxy action classifier or a DQN planner."""


@train_group.command("proxy")
@click.option("--world", "world_path", required=True, type=click.Path(exists=True))
@click.option("--samples", type=int, default=20000, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--epochs", type=int, default=40, show_default=True)
@click.option("--lr", type=float, default=0.05, show_default=True)
@click.option("--hidden", type=int, default=64, show_default=True)
@click.option("--dataset-csv", type=click.Path(), default=None,
              help="Also dump the labeled dataset as CSV.")
@click.option("-o", "--output", type=click.Path(), default=None,
              help="Weights file [default: <out-dir>/proxy.json]")
@click.option("--out-dir", type=click.Path(), default=None)
def cmd_train_proxy(world_path, samples, seed, epochs, lr, hidden, dataset_csv,
                    output, out_dir):
    """Build the labeled proxy dataset and train the action classifier."""
    try:
        w = load_world(world_path)
        out = Path(output) if output else _out_dir(out_dir) / "proxy.json"
        ds = build_proxy_dataset(w, w.domains[0], samples, seed)
        cfg = ProxyTrainConfig(hidden=(hidden,), lr=lr, epochs=epochs, seed=seed)
        clf, rep = train_action_classifier(ds, cfg)
    except (WorldConfigError, PdvError, ValueError) as exc:
        _fail_config(str(exc))
    clf.save(out)
    if dataset_csv:
        ds.save_csv(dataset_csv)
    write_manifest(
        out.with_suffix(".manifest.json"),
        command="train proxy",
        config={"world": str(world_path), "samples": samples, "seed": seed,
                "epochs": epochs, "lr": lr, "hidden": hidden},
        inputs={"world": world_path},
        outputs={"weights": out},
    )
    click.echo(f"held-out accuracy: {rep.holdout_accuracy:.3f} "
               f"(train {rep.train_accuracy:.3f}, n={len(ds)})")
    click.echo(f"wrote {out}")


@train_group.command("dqn")
@click.option("--variant", type=click.Choice(["proposed", "olc_only", "ilc_only"]),
              default="proposed", show_default=True)
@click.option("--world", "world_path", required=True, type=click.Path(exists=True))
@click.option("--proxy", "proxy_path", type=click.Path(), default=None,
              help="Action-classifier weights (required unless --variant olc_only).")
@click.option("--episodes", type=int, default=50000, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--gamma", type=float, default=0.95, show_default=True)
@click.option("--lr", type=float, default=1e-3, show_default=True)
@click.option("--lr-end", type=float, default=None,
              help="Linear learning-rate anneal target; default constant lr.")
@click.option("--select-every", type=int, default=0, show_default=True,
              help="Episodes between greedy checkpoint-selection evals; 0 keeps final weights.")
@click.option("--t-steps", "t_steps", type=int, default=3, show_default=True)
@click.option("--epsilon-decay-frac", type=float, default=0.3, show_default=True,
              help="Fraction of episodes over which epsilon anneals.")
@click.option("--checkpoint-every", type=int, default=0, show_default=True)
@click.option("--resume", is_flag=True, help="Resume from the checkpoint file.")
@click.option("--figures/--no-figures", default=True, show_default=True)
@click.option("-o", "--output", type=click.Path(), default=None,
              help="Weights file [default: <out-dir>/dqn_<variant>.json]")
@click.option("--out-dir", type=click.Path(), default=None)
def cmd_train_dqn(variant, world_path, proxy_path, episodes, seed, gamma, lr,
                  lr_end, select_every, t_steps, epsilon_decay_frac,
                  checkpoint_every, resume, figures, output, out_dir):
    """Train a DQN planner on the training domain of a world."""
    try:
        w = load_world(world_path)
        out = Path(output) if output else _out_dir(out_dir) / f"dqn_{variant}.json"
        provider = None
        if variant != "olc_only":
            if proxy_path is None:
                _fail_config(f"--variant {variant} requires --proxy weights")
            provider = ClassifierIlcProvider(ActionClassifier.load(proxy_path))
        env = EpisodeEnvironment(
            w, w.domains[0], T=t_steps, ilc_provider=provider,
            variant=variant, seed=seed,
        )
        cfg = DqnConfig(episodes=episodes, gamma=gamma, lr=lr, lr_end=lr_end,
                        seed=seed, epsilon_decay_frac=epsilon_decay_frac,
                        checkpoint_every=checkpoint_every,
                        select_every=select_every)
        ckpt = out.with_suffix(".ckpt.npz")
        resume_from = ckpt if resume else None
        if resume and not ckpt.exists():
            _fail_config(f"--resume given but checkpoint {ckpt} does not exist")
    except (WorldConfigError, PdvError, ValueError, FileNotFoundError) as exc:
        _fail_config(str(exc))
    try:
        net, log_rows = train_dqn(env, cfg, resume_from=resume_from, checkpoint_path=ckpt)
    except rl.TrainingDivergenceError as exc:
        _fail_runtime(f"training diverged: {exc}")
    net.save(out, extra={"kind": "dqn", "variant": variant,
                         "config": {"episodes": episodes, "gamma": gamma, "lr": lr,
                                    "lr_end": lr_end, "select_every": select_every,
                                    "seed": seed, "T": t_steps}})
    log_path = out.with_suffix(".log.csv")
    with open(log_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(rl.LOG_HEADER)
        for row in log_rows:
            writer.writerow([row.episode, f"{row.epsilon:.6f}", row.reward,
                             f"{row.loss:.10g}", f"{row.mrr_window:.6f}"])
    inputs = {"world": world_path}
    if proxy_path:
        inputs["proxy"] = proxy_path
    write_manifest(
        out.with_suffix(".manifest.json"),
        command="train dqn",
        config={"variant": variant, "episodes": episodes, "seed": seed,
                "gamma": gamma, "lr": lr, "T": t_steps, "world": str(world_path),
                "proxy": str(proxy_path) if proxy_path else None},
        inputs=inputs,
        outputs={"weights": out, "log": log_path},
    )
    if figures:
        fig = report.render_training_figure(log_rows, out.with_suffix(".training.png"))
        click.echo(f"wrote {fig}")
    final_mrr = log_rows[-1].mrr_window if log_rows else float("nan")
    click.echo(f"wrote {out} (final 100-episode MRR {final_mrr:.3f})")


# ---------------------------------------------------------------------------
# eval
# ---------------------------------------------------------------------------

PLANNER_NAMES = list(VARIANTS)


def _build_planner(name, weights_dir, n_actions):
    if name == "single_view":
        return SingleViewPlanner(), None
    if name == "random":
        return RandomPlanner(n_actions), None
    path = Path(weights_dir) / f"dqn_{name}.json"
    if not path.exists():
        _fail_config(f"missing weights file for planner {name!r}: {path}")
    return DqnPlanner(Mlp.load(path), variant=name), path


@main.command("eval")
@click.option("--config", "config_path", type=click.Path(exists=True), default=None,
              help="JSON config; flags override its values.")
@click.option("--world", "world_path", type=click.Path(), default=None)
@click.option("--weights-dir", type=click.Path(), default=None,
              help="Directory with dqn_<variant>.json and proxy.json.")
@click.option("--planners", "planners_csv", default=None,
              help=f"Comma list from {PLANNER_NAMES}. [default: all]")
@click.option("--episodes", type=int, default=None, help="[default: 5000]")
@click.option("--seed", type=int, default=None, help="[default: 0]")
@click.option("--t-steps", "t_steps", type=int, default=None, help="[default: 3]")
@click.option("--preset", type=click.Choice(["paper-shape"]), default=None,
              help="paper-shape: 5 shifted test domains x all 5 planners.")
@click.option("--shortlist-k", type=int, default=None)
@click.option("--jobs", type=int, default=None, help="[default: all cores]")
@click.option("--figures/--no-figures", default=True, show_default=True)
@click.option("--out-dir", type=click.Path(), default=None)
def cmd_eval(config_path, world_path, weights_dir, planners_csv, episodes, seed,
             t_steps, preset, shortlist_k, jobs, figures, out_dir):
    """Run the planner x domain benchmark and write the result table."""
    file_cfg = {}
    if config_path:
        with open(config_path) as fh:
            file_cfg = json.load(fh)

    def pick(flag, key, default):
        return flag if flag is not None else file_cfg.get(key, default)

    world_path = pick(world_path, "world", None)
    weights_dir = pick(weights_dir, "weights_dir", None)
    planners_csv = pick(planners_csv, "planners", ",".join(PLANNER_NAMES))
    if isinstance(planners_csv, list):
        planners_csv = ",".join(planners_csv)
    episodes = pick(episodes, "episodes", 5000)
    seed = pick(seed, "seed", 0)
    t_steps = pick(t_steps, "T", 3)
    preset = pick(preset, "preset", None)
    shortlist_k = pick(shortlist_k, "shortlist_k", None)
    out_dir = _out_dir(pick(out_dir, "out_dir", None))
    jobs = pick(jobs, "jobs", os.cpu_count() or 1)

    if world_path is None:
        _fail_config("--world (or config key 'world') is required")
    if weights_dir is None:
        _fail_config("--weights-dir (or config key 'weights_dir') is required")

    names = [n.strip() for n in planners_csv.split(",") if n.strip()]
    bad = [n for n in names if n not in PLANNER_NAMES]
    if bad:
        _fail_config(f"unknown planner(s) {bad}; valid: {PLANNER_NAMES}")

    try:
        w = load_world(world_path)
    except (WorldConfigError, FileNotFoundError) as exc:
        _fail_config(str(exc))

    if preset == "paper-shape":
        domains = [Domain(id=f"shift{s:.1f}", shift_strength=s, seed=i + 1)
                   for i, s in enumerate([0.2, 0.3, 0.4, 0.5, 0.6])]
        names = list(PLANNER_NAMES)
    else:
        domains = [d for d in w.domains]

    planners, providers, inputs = {}, {}, {"world": world_path}
    proxy_path = Path(weights_dir) / "proxy.json"
    needs_ilc = [n for n in names if n in ("proposed", "ilc_only")]
    clf = None
    if needs_ilc:
        if not proxy_path.exists():
            _fail_config(f"missing proxy classifier weights: {proxy_path}")
        clf = ActionClassifier.load(proxy_path)
        inputs["proxy"] = proxy_path
    for n in names:
        planners[n], wpath = _build_planner(n, weights_dir, DEFAULT_N_ACTIONS)
        if wpath:
            inputs[f"weights_{n}"] = wpath
        if n in ("proposed", "ilc_only"):
            providers[n] = ClassifierIlcProvider(clf)

    cfg = evaluate.ExperimentConfig(
        episodes=episodes, T=t_steps, seed=seed, shortlist_k=shortlist_k,
    )
    raw_path = out_dir / "raw.jsonl"
    sink, close = evaluate.write_raw_jsonl(raw_path)
    table = evaluate.run_experiment(w, planners, domains, cfg,
                                    ilc_providers=providers, raw_sink=sink, jobs=jobs)
    close()
    table_path = out_dir / "table.csv"
    long_path = out_dir / "table_long.csv"
    table.write_csv(table_path)
    table.write_long_csv(long_path)
    outputs = {"table": table_path, "table_long": long_path, "raw": raw_path}
    if figures:
        outputs["figure"] = report.render_mrr_figure(table, out_dir / "mrr.png")
    write_manifest(
        out_dir / "manifest.json",
        command="eval",
        config={"world": str(world_path), "weights_dir": str(weights_dir),
                "planners": names, "episodes": episodes, "seed": seed, "T": t_steps,
                "preset": preset, "shortlist_k": shortlist_k,
                "domains": [d.__dict__ for d in domains],
                "proxy": str(proxy_path) if needs_ilc else None},
        inputs=inputs,
        outputs=outputs,
    )
    click.echo(f"wrote {table_path}")
    with open(table_path) as fh:
        click.echo(fh.read().rstrip())


# ---------------------------------------------------------------------------
# inspect
# ---------------------------------------------------------------------------

def _replay_episode(manifest: dict, record: dict):
    """Re-run one logged episode step by step from the eval manifest."""
    cfg = manifest["config"]
    w = load_world(cfg["world"])
    domain = next(
        Domain(id=d["id"], shift_strength=d["shift_strength"], seed=d["seed"],
               confusion_blend=d.get("confusion_blend", 0.0))
        for d in cfg["domains"] if d["id"] == record["domain"]
    )
    provider = None
    if record["planner"] in ("proposed", "ilc_only"):
        provider = ClassifierIlcProvider(ActionClassifier.load(cfg["proxy"]))
    env = EpisodeEnvironment(
        w, domain, T=len(record["actions"]) if record["actions"] else 0,
        ilc_provider=provider,
        variant=record["planner"] if record["planner"] in VARIANTS else "proposed",
        seed=cfg["seed"],
    )
    state = env.reset(episode=record["episode"])
    if env.start_v != record["start"]:
        raise RuntimeError(
            f"replay mismatch: start {env.start_v} != logged {record['start']}"
        )
    steps = [{
        "step": 0, "viewpoint": env.true_v, "action": None,
        "place_pdv": env.place_pdv, "state": state, "rank": env.last_rank,
    }]
    for t, a in enumerate(record["actions"], start=1):
        state, reward, terminal = env.step(a)
        steps.append({
            "step": t, "viewpoint": env.true_v, "action": a,
            "place_pdv": env.place_pdv, "state": state, "rank": env.last_rank,
            "reward": reward, "terminal": terminal,
        })
    return env, steps


@main.command("inspect")
@click.option("--episode", "episode_ref", required=True,
              help="RAW.jsonl:INDEX, e.g. out/raw.jsonl:17")
@click.option("--format", "fmt", type=click.Choice(["text", "csv"]), default="text",
              show_default=True)
@click.option("--figure", type=click.Path(), default=None,
              help="Also render the belief heatmap to this file.")
def cmd_inspect(episode_ref, fmt, figure):
    """Print a step-by-step trace of one evaluated episode."""
    if ":" not in episode_ref:
        _fail_config("--episode must be RAW.jsonl:INDEX")
    raw_path, _, idx_s = episode_ref.rpartition(":")
    try:
        idx = int(idx_s)
    except ValueError:
        _fail_config(f"bad episode index {idx_s!r}")
    try:
        with open(raw_path) as fh:
            lines = fh.readlines()
    except FileNotFoundError as exc:
        _fail_config(str(exc))
    if not 0 <= idx < len(lines):
        _fail_config(f"episode index {idx} out of range [0, {len(lines)})")
    record = json.loads(lines[idx])
    manifest_path = Path(raw_path).parent / "manifest.json"
    if not manifest_path.exists():
        _fail_config(f"manifest not found next to raw file: {manifest_path}")
    try:
        env, steps = _replay_episode(load_manifest(manifest_path), record)
    except FileNotFoundError as exc:
        _fail_config(str(exc))
    except RuntimeError as exc:
        _fail_runtime(str(exc))

    if fmt == "csv":
        writer = csv.writer(sys.stdout)
        n_c = env.world.n_places
        writer.writerow(["step", "viewpoint", "action", "rank"] +
                        [f"p_{i}" for i in range(n_c)] +
                        [f"s_{i}" for i in range(len(steps[0]['state']))])
        for s in steps:
            writer.writerow(
                [s["step"], s["viewpoint"],
                 "" if s["action"] is None else s["action"], s["rank"]] +
                [f"{x:.6f}" for x in s["place_pdv"]] +
                [f"{x:.6f}" for x in s["state"]])
    else:
        click.echo(f"episode {record['episode']} | planner {record['planner']} | "
                   f"domain {record['domain']} | start {record['start']} | "
                   f"true place {record['true_place']} | final rank {record['rank']}")
        for s in steps:
            act = "-" if s["action"] is None else f"+{s['action'] + 1}m"
            top = np.argsort(-s["place_pdv"], kind="stable")[:3]
            top_s = ", ".join(f"c{int(c)}:{s['place_pdv'][c]:.3f}" for c in top)
            click.echo(f"  step {s['step']}: v={s['viewpoint']:4d} action={act:5s} "
                       f"rank={s['rank']:2d} top3=[{top_s}]")
            click.echo(f"    state rrf: {np.array2string(s['state'], precision=3, max_line_width=100)}")
    if figure:
        rec = dict(record)
        rec["beliefs"] = [s["place_pdv"] for s in steps]
        report.render_episode_figure(rec, figure)
        click.echo(f"wrote {figure}")


if __name__ == "__main__":
    main()
