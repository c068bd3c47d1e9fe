"""Command-line experiment harness.

Subcommands ``synth``, ``auth``, ``gaze``, ``psycho``, ``plot`` and ``all``
share one JSON config. Output goes under ``--out``, else the config's
``output_dir``, else ``$IRISDEFOCUS_OUT``, else ``./irisdefocus-out``::

    dataset/            P5 images and manifest.json
    auth/               crr.csv, crr_summary.csv, hd_pairs.csv, hd_matrix.csv,
                        threshold.csv, codes/*.iris
    gaze/               gaze.csv, gaze_identities.csv, detection.csv, sweep.csv,
                        sweep_fit.csv
    psycho/             fits.csv, summary.csv, stats.csv, pairwise.csv
    plots/              *.svg
    report.json

Exit status: 0 success, 1 runtime failure, 2 invalid input (config, CSV or
missing dataset). Reports never depend on ``--jobs``.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import os
import sys
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from . import gazeutil, plots, psycho, synth
from .config import ConfigError, ExperimentConfig, load_config
from .image import EyeImage
from .iris import (
    HD_AUTH,
    IrisCode,
    SegmentationError,
    boundary_from_truth,
    encode,
    exclude_noisy,
    normalize,
    pairwise_hd,
    segment_iris,
    select_threshold,
)
from .iris.codefile import write_code
from .logistic import SeparationError
from .optics import defocus_sigma
from .psycho.io import CSVFormatError, format_likert, format_responses, read_likert, read_responses
from .psycho.simulate import simulate_likert, simulate_study

ENV_OUT = "IRISDEFOCUS_OUT"
DEFAULT_OUT = "irisdefocus-out"
REPORT_NAME = "report.json"

log = logging.getLogger("irisdefocus")


class InputError(Exception):
    """Invalid user input; maps to exit status 2."""


# ---------------------------------------------------------------- formatting

def fmt(v) -> str:
    """Fixed CSV rendering: nine significant digits for floats, ``nan`` for missing."""
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return "nan" if math.isnan(v) else f"{v:.9g}"
    return "" if v is None else str(v)


def write_csv(path: Path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) for v in row])


def _json_safe(obj):
    if isinstance(obj, dict):
        return {str(k): _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_safe(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return None if math.isnan(v) or math.isinf(v) else v
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def load_report(out: Path) -> dict:
    path = out / REPORT_NAME
    return json.loads(path.read_text()) if path.is_file() else {}


def update_report(out: Path, section: str, content: dict, cfg: ExperimentConfig) -> None:
    report = load_report(out)
    report["config"] = cfg.to_dict()
    report[section] = _json_safe(content)
    out.mkdir(parents=True, exist_ok=True)
    (out / REPORT_NAME).write_text(json.dumps(report, indent=1, sort_keys=True) + "\n")


def _map(fn: Callable, items: list, jobs: int) -> list:
    """Ordered map, in worker processes when ``jobs > 1``."""
    if jobs > 1 and len(items) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(fn, items, chunksize=max(1, len(items) // (4 * jobs))))
    return [fn(x) for x in items]


# ---------------------------------------------------------------- synth

def scene_jitter(cfg: ExperimentConfig) -> synth.SceneJitter:
    d = cfg.dataset
    base = synth.EyeScene(image_w=d.image_width, image_h=d.image_height,
                          pupil_center=(d.image_width / 2.0, d.image_height / 2.0),
                          sensor_noise_sigma=d.sensor_noise_sigma)
    return synth.SceneJitter(base=base, center_spread_px=d.center_spread_px,
                             pupil_radius_range=d.pupil_radius_range,
                             iris_radius_range=d.iris_radius_range,
                             eyelid_range=d.eyelid_range,
                             center_jitter_px=d.center_jitter_px,
                             radius_jitter_px=d.radius_jitter_px)


def _check_geometry(cfg: ExperimentConfig) -> None:
    d = cfg.dataset
    margin = d.center_spread_px + d.center_jitter_px + d.iris_radius_range[1]
    if 2 * margin > min(d.image_width, d.image_height):
        raise InputError("dataset: iris plus centre jitter does not fit inside the image")
    if d.pupil_radius_range[1] + d.radius_jitter_px >= d.iris_radius_range[0]:
        raise InputError("dataset: pupil radius range overlaps the iris radius range")
    if d.eyelid_range[1] >= 0.75:
        raise InputError("dataset.eyelid_range: coverage must stay below 0.75")


def cmd_synth(cfg: ExperimentConfig, out: Path, jobs: int = 1) -> dict:
    _check_geometry(cfg)
    d = cfg.dataset
    if d.identities < 2 or d.frames < 2:
        raise InputError("dataset: need at least 2 identities and 2 frames")
    manifest = synth.generate_dataset(out / "dataset", d.identities, d.frames, scene_jitter(cfg),
                                      d.sigma_levels, cfg.master_seed,
                                      {"contrast": d.contrast}, jobs=jobs)
    digest = synth.manifest_digest(out / "dataset" / synth.MANIFEST_NAME)
    section = {"frames": len(manifest["frames"]), "manifest_sha256": digest}
    update_report(out, "dataset", section, cfg)
    return section


def _manifest(out: Path) -> dict:
    try:
        manifest = synth.load_manifest(out / "dataset")
    except FileNotFoundError:
        raise InputError(f"no dataset under {out / 'dataset'}; run 'synth' first") from None
    except json.JSONDecodeError as exc:
        raise InputError(f"dataset manifest is not valid JSON: {exc.msg}") from None
    if not manifest.get("frames"):
        raise InputError("dataset is empty")
    return manifest


# ---------------------------------------------------------------- auth

def iris_code(image: EyeImage, iris: dict) -> tuple[IrisCode | None, str]:
    """Segment, unwrap and encode one frame; ``None`` with a reason on failure."""
    try:
        if iris["segmentation"] == "truth":
            boundary = boundary_from_truth(image.truth)
        else:
            boundary = segment_iris(image)
        norm = normalize(image, boundary, iris["h_radial"], iris["w_angular"])
    except (SegmentationError, ValueError) as exc:
        return None, f"segmentation failed: {exc}"
    return encode(norm, iris["f0_cpp"], iris["sigma_over_f0"]), "ok"


def _code_frame(task) -> tuple[IrisCode | None, str]:
    dataset_dir, entry, iris = task
    return iris_code(synth.load_frame(dataset_dir, entry), iris)


def _frame_name(entry: dict) -> str:
    return Path(entry["file"]).stem


def cmd_auth(cfg: ExperimentConfig, out: Path, jobs: int = 1) -> dict:
    manifest = _manifest(out)
    dataset_dir = out / "dataset"
    entries = manifest["frames"]
    levels = [float(s) for s in manifest["sigma_levels"]]
    iris = cfg.iris.model_dump()
    results = _map(_code_frame, [(str(dataset_dir), e, iris) for e in entries], jobs)

    code_dir = out / "auth" / "codes"
    code_dir.mkdir(parents=True, exist_ok=True)
    usable, failures, noisy = [], {}, {}
    for entry, (code, status) in zip(entries, results):
        s = entry["sigma_index"]
        if code is None:
            failures[s] = failures.get(s, 0) + 1
            log.warning("%s: %s", entry["file"], status)
            continue
        write_code(code_dir / f"{_frame_name(entry)}.iris", code, cfg.iris.max_shift)
        if exclude_noisy(code):
            noisy[s] = noisy.get(s, 0) + 1
            continue
        usable.append((entry, code))

    if not usable:
        raise RuntimeError("no frame produced a usable iris code")
    owner = np.array([e["identity_id"] for e, _ in usable])
    level = np.array([e["sigma_index"] for e, _ in usable])
    names = [_frame_name(e) for e, _ in usable]
    hd = pairwise_hd([c for _, c in usable], [c for _, c in usable], cfg.iris.max_shift)

    n = len(usable)
    iu, ju = np.triu_indices(n, k=1)
    same_level = level[iu] == level[ju]
    same_id = owner[iu] == owner[ju]
    focus = int(np.argmin(levels))  # enrollment level: the sharpest one
    pair_hd = hd[iu, ju]
    intra_focus = pair_hd[same_level & same_id & (level[iu] == focus)]
    inter_all = pair_hd[same_level & ~same_id]
    intra_focus = intra_focus[~np.isnan(intra_focus)]
    inter_all = inter_all[~np.isnan(inter_all)]
    if intra_focus.size == 0 or inter_all.size == 0:
        raise RuntimeError("threshold selection needs in-focus genuine and impostor pairs")
    sel = select_threshold(intra_focus, inter_all, cfg.iris.max_fpr,
                           cfg.iris.threshold_resolution)
    thr = sel.threshold
    auth_dir = out / "auth"
    write_csv(auth_dir / "threshold.csv",
              ["threshold", "max_fpr", "fpr", "tpr", "fnr", "tnr", "intra_pairs", "inter_pairs"],
              [[thr, cfg.iris.max_fpr, sel.fpr, sel.tpr, sel.fnr, sel.tnr,
                intra_focus.size, inter_all.size]])

    # pairwise distances within each level, for histograms and audits
    pair_rows = []
    for k in np.nonzero(same_level)[0]:
        a, b = iu[k], ju[k]
        pair_rows.append([levels[level[a]], names[a], names[b], bool(owner[a] == owner[b]),
                          pair_hd[k]])
    write_csv(auth_dir / "hd_pairs.csv", ["sigma_px", "frame_a", "frame_b", "same_identity", "hd"],
              pair_rows)

    ids = sorted({int(e["identity_id"]) for e in entries})
    crr_rows, summary, identity_crr = [], [], {}
    for s_idx, sigma in enumerate(levels):
        in_level = level == s_idx
        tot = {"intra": [0, 0], "focus": [0, 0], "inter": [0, 0]}
        for ident in ids:
            rows = np.nonzero(in_level & (owner == ident))[0]
            enroll = np.nonzero((level == focus) & (owner == ident))[0]
            block = hd[np.ix_(rows, rows)][np.triu_indices(rows.size, k=1)]
            cross = hd[np.ix_(rows, enroll)]
            if s_idx == focus:
                cross = block
            block, cross = block[~np.isnan(block)], cross[~np.isnan(cross)]
            im, fm = int(np.sum(block < thr)), int(np.sum(cross < thr))
            tot["intra"][0] += block.size
            tot["intra"][1] += im
            tot["focus"][0] += cross.size
            tot["focus"][1] += fm
            crr_i = 100.0 * im / block.size if block.size else math.nan
            crr_f = 100.0 * fm / cross.size if cross.size else math.nan
            identity_crr[(ident, s_idx)] = crr_i
            mean_hd = float(block.mean()) if block.size else math.nan
            crr_rows.append([sigma, ident, rows.size, block.size, im,
                             crr_i if block.size else "undefined", cross.size, fm,
                             crr_f if cross.size else "undefined", mean_hd])
        inter = pair_hd[same_level & ~same_id & (level[iu] == s_idx)]
        inter = inter[~np.isnan(inter)]
        tot["inter"] = [inter.size, int(np.sum(inter < thr))]
        pct = (lambda p: 100.0 * p[1] / p[0] if p[0] else math.nan)
        summary.append({
            "sigma_px": sigma,
            "frames": int(sum(e["sigma_index"] == s_idx for e in entries)),
            "segmentation_failures": failures.get(s_idx, 0),
            "excluded_noisy": noisy.get(s_idx, 0),
            "intra_pairs": tot["intra"][0], "intra_matches": tot["intra"][1],
            "crr_percent": pct(tot["intra"]),
            "focus_pairs": tot["focus"][0], "focus_matches": tot["focus"][1],
            "crr_vs_focus_percent": pct(tot["focus"]),
            "inter_pairs": tot["inter"][0], "inter_matches": tot["inter"][1],
            "fpr_percent": pct(tot["inter"]),
        })
    write_csv(auth_dir / "crr.csv",
              ["sigma_px", "identity", "frames", "intra_pairs", "intra_matches", "crr_percent",
               "focus_pairs", "focus_matches", "crr_vs_focus_percent", "mean_intra_hd"], crr_rows)
    cols = list(summary[0])
    write_csv(auth_dir / "crr_summary.csv", cols, [[r[c] for c in cols] for r in summary])

    # mean distance between every (level, identity) source and target group
    matrix_rows = []
    for sa, sigma_a in enumerate(levels):
        for sb, sigma_b in enumerate(levels):
            for ia in ids:
                ra = np.nonzero((level == sa) & (owner == ia))[0]
                for ib in ids:
                    rb = np.nonzero((level == sb) & (owner == ib))[0]
                    block = hd[np.ix_(ra, rb)]
                    if sa == sb and ia == ib:
                        block = block[np.triu_indices(ra.size, k=1)]
                    block = block[~np.isnan(block)]
                    m = float(block.mean()) if block.size else math.nan
                    matrix_rows.append([sigma_a, ia, sigma_b, ib, block.size, m,
                                        "undefined" if math.isnan(m) else bool(m < thr)])
    write_csv(auth_dir / "hd_matrix.csv",
              ["source_sigma_px", "source_identity", "target_sigma_px", "target_identity",
               "pairs", "mean_hd", "match"], matrix_rows)

    bins = np.linspace(0.0, 1.0, 51)
    hist = {}
    for s_idx, sigma in enumerate(levels):
        sel_level = same_level & (level[iu] == s_idx)
        intra = pair_hd[sel_level & same_id]
        inter = pair_hd[sel_level & ~same_id]
        hist[fmt(sigma)] = {
            "intra": np.histogram(intra[~np.isnan(intra)], bins)[0].tolist(),
            "inter": np.histogram(inter[~np.isnan(inter)], bins)[0].tolist(),
        }
    section = {
        "threshold": {"threshold": thr, "fpr": sel.fpr, "tpr": sel.tpr, "fnr": sel.fnr,
                      "tnr": sel.tnr, "max_fpr": cfg.iris.max_fpr},
        "crr": summary,
        "hd_histogram": {"bins": bins.tolist(), "levels": hist},
    }
    update_report(out, "auth", section, cfg)
    return section


# ---------------------------------------------------------------- gaze

def _detect_frame(task):
    dataset_dir, entry, detector = task
    image = synth.load_frame(dataset_dir, entry)
    obs = gazeutil.detect_pupil(image, detector)
    if not obs.found:
        return False, math.nan
    p = image.truth.pupil
    return True, math.hypot(obs.center[0] - p.x, obs.center[1] - p.y)


def _view_task(task):
    identity, scene, sigma, seed, viewing, detector = task
    return gazeutil.simulate_target_viewing(identity, scene, sigma, seed, viewing, detector)


def _sweep_task(task):
    identity, scene, sigma, seed, iris = task
    image = synth.render_eye_image(identity, scene, seed, defocus_sigma_px=sigma)
    code, _ = iris_code(image, iris)
    return None if code is None or exclude_noisy(code) else code


def sweep_threshold(out: Path) -> tuple[float, str]:
    """Threshold chosen by ``auth`` when it has run, else the published default."""
    path = out / "auth" / "threshold.csv"
    if path.is_file():
        with open(path, newline="") as fh:
            row = next(csv.DictReader(fh))
        return float(row["threshold"]), "auth"
    log.warning("no auth threshold found; the distance sweep uses %.2f", HD_AUTH)
    return HD_AUTH, "default"


def cmd_gaze(cfg: ExperimentConfig, out: Path, jobs: int = 1) -> dict:
    manifest = _manifest(out)
    g = cfg.gaze
    dataset_dir = out / "dataset"
    detector = gazeutil.PupilDetector(percentile=g.pupil_percentile,
                                      min_circularity=g.min_circularity)
    entries = manifest["frames"]
    levels = [float(s) for s in manifest["sigma_levels"]]
    gaze_dir = out / "gaze"

    # pupil detection on the stored frames
    found = _map(_detect_frame, [(str(dataset_dir), e, detector) for e in entries], jobs)
    det_rows = []
    for s_idx, sigma in enumerate(levels):
        obs = [f for e, f in zip(entries, found) if e["sigma_index"] == s_idx]
        errs = [err for ok, err in obs if ok]
        det_rows.append([sigma, len(obs), sum(ok for ok, _ in obs), sum(ok for ok, _ in obs) / len(obs),
                         float(np.mean(errs)) if errs else math.nan,
                         float(np.max(errs)) if errs else math.nan])
    write_csv(gaze_dir / "detection.csv",
              ["sigma_px", "frames", "detected", "detection_rate", "mean_center_error_px",
               "max_center_error_px"], det_rows)

    # target viewing on the dataset's identities
    jitter = scene_jitter(cfg)
    seed = manifest["master_seed"]
    contrast = {"contrast": cfg.dataset.contrast}
    ids = sorted({int(e["identity_id"]) for e in entries})
    viewers = ids[:g.identities]
    eyelid = 0.5 * (cfg.dataset.eyelid_range[0] + cfg.dataset.eyelid_range[1])
    geometry = gazeutil.ScreenGeometry(g.screen_distance_mm, g.px_size_mm)
    viewing = gazeutil.TargetViewing(geometry, g.target_spacing_px, g.calibration_frames,
                                     g.validation_frames)
    tasks = []
    for ident in viewers:
        identity = synth.make_identity(ident, seed, **contrast)
        scene = replace(jitter.identity_scene(ident, seed), eyelid_coverage=eyelid)
        for l_idx, sigma in enumerate(g.sigma_levels):
            tasks.append((identity, scene, float(sigma),
                          synth.mix_seed(seed, 0x6A2E, ident, l_idx), viewing, detector))
    views = _map(_view_task, tasks, jobs)
    id_rows, gaze_rows = [], []
    for i, (t, r) in enumerate(zip(tasks, views)):
        id_rows.append([r.sigma_px, t[0].identity_id, r.detection_rate, r.mean_error_deg,
                        r.precision_deg, r.calibration_rms_px, r.failed])
    for sigma in g.sigma_levels:
        rs = [r for r in views if r.sigma_px == float(sigma)]
        ok = [r for r in rs if not r.failed]
        mean = (lambda vals: float(np.mean(vals)) if vals else math.nan)
        gaze_rows.append({
            "sigma_px": float(sigma),
            "identities": len(rs),
            "detection_rate": float(np.mean([r.detection_rate for r in rs])),
            "mean_error_deg": mean([r.mean_error_deg for r in ok]),
            "precision_deg": mean([r.precision_deg for r in ok]),
            "calibration_rms_px": mean([r.calibration_rms_px for r in ok]),
            "failed": not ok,
        })
    write_csv(gaze_dir / "gaze_identities.csv",
              ["sigma_px", "identity", "detection_rate", "mean_error_deg", "precision_deg",
               "calibration_rms_px", "failed"], id_rows)
    cols = list(gaze_rows[0])
    write_csv(gaze_dir / "gaze.csv", cols, [[r[c] for c in cols] for r in gaze_rows])

    section = {"detection": [dict(zip(["sigma_px", "frames", "detected", "detection_rate",
                                       "mean_center_error_px", "max_center_error_px"], r))
                             for r in det_rows],
               "gaze": gaze_rows}
    if g.sweep_distances_mm:
        section["sweep"] = _distance_sweep(cfg, out, jobs, manifest, ids)
    update_report(out, "gaze", section, cfg)
    return section


def _distance_sweep(cfg: ExperimentConfig, out: Path, jobs: int, manifest: dict,
                    ids: list[int]) -> dict:
    """Match frames captured around each eye distance against in-focus enrollment frames.

    Every probe frame sits at its own distance, the nominal one plus
    Gaussian head movement; the sigmoid is fitted on those per-frame
    distances and match counts.
    """
    g = cfg.gaze
    seed = manifest["master_seed"]
    optical = cfg.optics.optical_config()
    threshold, source = sweep_threshold(out)
    jitter = scene_jitter(cfg)
    contrast = {"contrast": cfg.dataset.contrast}
    iris = cfg.iris.model_dump()
    people = ids[:g.sweep_identities]

    tasks, keys, frame_dist = [], [], []
    for ident in people:
        identity = synth.make_identity(ident, seed, **contrast)
        base = jitter.identity_scene(ident, seed)
        for d_idx, nominal in [(-1, None)] + list(enumerate(g.sweep_distances_mm)):
            for f in range(g.sweep_frames):
                fs = synth.mix_seed(seed, 0x5EE9, ident, d_idx + 1, f)
                if nominal is None:
                    dist, sigma = math.nan, 0.0
                else:
                    rng = np.random.default_rng(synth.mix_seed(fs, 0xD1))
                    dist = nominal + g.sweep_distance_jitter_mm * rng.standard_normal()
                    with warnings.catch_warnings():
                        warnings.simplefilter("ignore")  # nearer than focus blurs too
                        sigma = float(defocus_sigma(optical, dist).sigma_px)
                tasks.append((identity, jitter.frame_scene(base, fs), sigma, fs, iris))
                keys.append((ident, d_idx))
                frame_dist.append((dist, sigma))
    codes = _map(_sweep_task, tasks, jobs)

    enroll = {p: [c for k, c in zip(keys, codes) if k == (p, -1) and c is not None]
              for p in people}
    per_frame = []  # (nominal index, distance, sigma, matches, trials)
    for (ident, d_idx), code, (dist, sigma) in zip(keys, codes, frame_dist):
        if d_idx < 0 or code is None or not enroll[ident]:
            continue
        m = pairwise_hd([code], enroll[ident], cfg.iris.max_shift)
        m = m[~np.isnan(m)]
        if m.size:
            per_frame.append((d_idx, dist, sigma, int(np.sum(m < threshold)), int(m.size)))

    rows = []
    for d_idx, nominal in enumerate(g.sweep_distances_mm):
        fr = [r for r in per_frame if r[0] == d_idx]
        trials = sum(r[4] for r in fr)
        matches = sum(r[3] for r in fr)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            sigma = float(defocus_sigma(optical, nominal).sigma_px)
        rows.append([nominal, sigma, len(fr), trials, matches,
                     100.0 * matches / trials if trials else math.nan])
    write_csv(out / "gaze" / "sweep.csv",
              ["distance_mm", "sigma_px", "frames", "trials", "matches", "crr_percent"], rows)

    fit = {"status": "ok", "a": math.nan, "b": math.nan, "midpoint_mm": math.nan,
           "direction": "", "threshold": threshold, "threshold_source": source}
    try:
        sig = gazeutil.fit_crr_sigmoid([(r[1], r[3], r[4]) for r in per_frame], "distance")
        fit.update(a=sig.a, b=sig.b, midpoint_mm=sig.midpoint)
    except SeparationError as exc:
        fit.update(status="separated", direction=exc.direction)
    except ValueError as exc:
        fit.update(status=f"undefined: {exc}")
    cols = ["status", "a", "b", "midpoint_mm", "direction", "threshold", "threshold_source"]
    write_csv(out / "gaze" / "sweep_fit.csv", cols, [[fit[c] for c in cols]])
    names = ["distance_mm", "sigma_px", "frames", "trials", "matches", "crr_percent"]
    return {"points": [dict(zip(names, r)) for r in rows], "fit": fit}


# ---------------------------------------------------------------- psycho

def _psycho_inputs(cfg: ExperimentConfig, responses: str | None, likert: str | None):
    responses = responses or cfg.psycho.responses_csv
    likert = likert or cfg.psycho.likert_csv
    trials = (read_responses(responses) if responses
              else simulate_study(cfg.master_seed))
    tables = (read_likert(likert) if likert
              else simulate_likert(cfg.master_seed, cfg.psycho.simulated_participants))
    if not trials:
        raise InputError("responses: no trials")
    return trials, tables, bool(responses), bool(likert)


def cmd_psycho(cfg: ExperimentConfig, out: Path, responses: str | None = None,
               likert: str | None = None) -> dict:
    trials, tables, given_r, given_l = _psycho_inputs(cfg, responses, likert)
    pdir = out / "psycho"
    pdir.mkdir(parents=True, exist_ok=True)
    if not given_r:
        (pdir / "responses_simulated.csv").write_text(format_responses(trials))
    if not given_l:
        (pdir / "likert_simulated.csv").write_text(format_likert(tables))

    by_pid = psycho.group_by_participant(trials)
    try:
        excl = psycho.exclude_participants(by_pid)
    except ValueError as exc:
        raise InputError(f"responses: {exc}") from None
    fit_rows, rates, curves = [], {}, []
    for pid in sorted(by_pid):
        resp = by_pid[pid]
        mr = psycho.miss_rate(resp)
        if pid in excl.excluded:
            fit_rows.append([pid, len(resp), "excluded", math.nan, math.nan, math.nan, math.nan, 0])
            continue
        rates[pid] = mr.rates
        try:
            f = psycho.fit_psychometric(resp)
        except SeparationError as exc:
            fit_rows.append([pid, len(resp), f"separated:{exc.direction}",
                             math.nan, math.nan, math.nan, math.nan, 0])
            continue
        except psycho.UndefinedThresholdError:
            fit_rows.append([pid, len(resp), "flat", math.nan, math.nan, math.nan, math.nan, 0])
            continue
        fit_rows.append([pid, len(resp), "ok", f.a, f.b, f.pse, f.dt, f.converged])
        curves.append({"participant": pid, "a": f.a, "b": f.b,
                       "rates": sorted(mr.rates.items())})
    pooled = None
    if rates:
        try:
            pooled = psycho.pooled_curve(rates)
            fit_rows.append(["pooled", sum(len(by_pid[p]) for p in rates), "ok", pooled.a,
                             pooled.b, pooled.pse, pooled.dt, pooled.converged])
        except (ValueError, psycho.UndefinedThresholdError) as exc:
            log.warning("pooled curve undefined: %s", exc)
    write_csv(pdir / "fits.csv",
              ["participant", "trials", "status", "a", "b", "pse", "dt", "converged"], fit_rows)

    ok = [r for r in fit_rows if r[2] == "ok" and r[0] != "pooled"]
    summary_rows = []
    if ok:
        s = psycho.summarize_thresholds([r[5] for r in ok], [r[6] for r in ok])
        summary_rows.append(["fitted", s.n, s.mean_pse, s.std_pse, s.mean_dt, s.std_dt])
    pub = psycho.published_summary()
    summary_rows.append(["published_rows", pub.n, pub.mean_pse, pub.std_pse, pub.mean_dt,
                         pub.std_dt])
    summary_rows.append(["published_average", len(psycho.PUBLISHED_THRESHOLDS),
                         psycho.PUBLISHED_AVERAGE[0], psycho.PUBLISHED_STD[0],
                         psycho.PUBLISHED_AVERAGE[1], psycho.PUBLISHED_STD[1]])
    write_csv(pdir / "summary.csv", ["source", "n", "mean_pse", "std_pse", "mean_dt", "std_dt"],
              summary_rows)

    stat_rows, pair_rows = [], []
    for attr in sorted(tables):
        t = tables[attr]
        try:
            fr = psycho.friedman_test(t)
        except ValueError as exc:
            raise InputError(f"likert, attribute {attr}: {exc}") from None
        n, k = t.ratings.shape
        stat_rows.append([attr, n, k, fr.chi_sq, fr.df, fr.p])
        for c in psycho.pairwise_wilcoxon(t):
            r = c.result
            pair_rows.append([attr, c.level_a, c.level_b, r.n, r.w_plus, r.w_minus, r.statistic,
                              r.method, r.p, c.p_adjusted])
    write_csv(pdir / "stats.csv", ["attribute", "n", "k", "chi_sq", "df", "p"], stat_rows)
    write_csv(pdir / "pairwise.csv",
              ["attribute", "level_a", "level_b", "n", "w_plus", "w_minus", "statistic",
               "method", "p", "p_bonferroni"], pair_rows)

    section = {
        "excluded": excl.excluded,
        "kept": excl.kept,
        "curves": curves,
        "pooled": None if pooled is None else {"a": pooled.a, "b": pooled.b, "pse": pooled.pse,
                                               "dt": pooled.dt},
        "friedman": [dict(zip(["attribute", "n", "k", "chi_sq", "df", "p"], r))
                     for r in stat_rows],
        "inputs": {"responses": "file" if given_r else "simulated",
                   "likert": "file" if given_l else "simulated"},
    }
    update_report(out, "psycho", section, cfg)
    return section


# ---------------------------------------------------------------- plot

def cmd_plot(cfg: ExperimentConfig, out: Path) -> list[Path]:
    report = load_report(out)
    if not report:
        raise InputError(f"no {REPORT_NAME} under {out}; run the analyses first")
    return plots.write_plots(report, out / "plots")


# ---------------------------------------------------------------- entry point

def resolve_out(arg: str | None, cfg: ExperimentConfig) -> Path:
    return Path(arg or cfg.output_dir or os.environ.get(ENV_OUT) or DEFAULT_OUT)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="JSON experiment config")
    common.add_argument("--out", metavar="DIR",
                        help=f"output directory (default: config output_dir, ${ENV_OUT}, "
                             f"./{DEFAULT_OUT})")
    common.add_argument("--seed", type=int, metavar="N", help="override master_seed")
    common.add_argument("--jobs", type=int, metavar="N", default=1,
                        help="worker processes for frame-level work (default 1)")
    common.add_argument("-v", "--verbose", action="store_true", help="log progress")

    parser = argparse.ArgumentParser(prog="irisdefocus", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("synth", parents=[common], help="render the synthetic eye dataset")
    sub.add_parser("auth", parents=[common], help="iris matching, CRR and HD matrix")
    sub.add_parser("gaze", parents=[common], help="pupil detection, gaze accuracy, distance sweep")
    for name, text in (("psycho", "psychometric fits and rank statistics"),
                       ("all", "every stage in order")):
        p = sub.add_parser(name, parents=[common], help=text)
        p.add_argument("--responses", metavar="CSV", help="trial responses (else simulated)")
        p.add_argument("--likert", metavar="CSV", help="Likert ratings (else simulated)")
    sub.add_parser("plot", parents=[common], help="SVG figures from report.json")
    return parser


def run(args: argparse.Namespace) -> None:
    cfg = load_config(args.config)
    if args.seed is not None:
        if not 0 <= args.seed < 2 ** 64:
            raise InputError("--seed must be a non-negative 64-bit integer")
        cfg = cfg.with_seed(args.seed)
    if args.jobs < 1:
        raise InputError("--jobs must be at least 1")
    out = resolve_out(args.out, cfg)
    stages = {
        "synth": lambda: cmd_synth(cfg, out, args.jobs),
        "auth": lambda: cmd_auth(cfg, out, args.jobs),
        "gaze": lambda: cmd_gaze(cfg, out, args.jobs),
        "psycho": lambda: cmd_psycho(cfg, out, getattr(args, "responses", None),
                                     getattr(args, "likert", None)),
        "plot": lambda: cmd_plot(cfg, out),
    }
    order = list(stages) if args.command == "all" else [args.command]
    for name in order:
        t0 = time.perf_counter()
        stages[name]()
        log.info("%s finished in %.1f s", name, time.perf_counter() - t0)


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    try:
        run(args)
    except (ConfigError, CSVFormatError, InputError) as exc:
        print(f"irisdefocus: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # runtime failure: report, do not trace
        print(f"irisdefocus: error: {exc}", file=sys.stderr)
        if args.verbose:
            raise
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
