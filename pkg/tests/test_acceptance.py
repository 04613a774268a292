"""Release gate: one test per shipping criterion.

Each test prints a single visible `[criterion N] PASS/FAIL` line before
asserting, so the full verdict is readable straight off the pytest output
even with capture enabled.
"""

import bisect
import decimal
import json
import time

import numpy as np
from helpers import make_segment

from muse import loop, media, postproduction, production
from muse.adapters import ProviderConfig
from muse.adapters.mocks import (
    DefaultScriptedJudge,
    ScriptedJudge,
    build_mock_registry,
)
from muse.bench import formulas
from muse.cli import main as cli_main
from muse.errors import InfeasibleLayout
from muse.model import (
    BBoxLayout,
    BoundaryGuard,
    ChunkPlan,
    CLOSE_UP_FORBIDDEN_MOTIONS,
    ControlBundle,
    GenerationParams,
    Phase,
    Severity,
    TailState,
    UserPrompt,
    ViolationKind,
    ViolationSignal,
)
from muse.orchestrator import run_story
from muse.store import RunStore, TickClock

PROMPT = "A courier uncovers a conspiracy in the rain"
AUDIO_COLUMNS = ("Synergy", "Nes", "Grounding", "Age", "Emotion", "Prosody",
                 "Clarity")


def _report(capsys, number, name, ok, detail=""):
    with capsys.disabled():
        line = f"[criterion {number}] {'PASS' if ok else 'FAIL'}: {name}"
        if detail:
            line += f" ({detail})"
        print(line)


# -- criterion 1: formulas against independent oracles -----------------


def _oracle_nsr(levels):
    return float(np.mean([level / 3.0 for level in levels]) * 100.0)


_SER_BANDS = [15, 25, 40, 55]
_SER_MULTS = [0.6, 0.8, 1.0, 1.1, 1.2]


def _oracle_ser(dims, count):
    return float(np.mean(dims)) * _SER_MULTS[bisect.bisect_right(_SER_BANDS, count)]


def _oracle_likert(value):
    snapped = (decimal.Decimal(value) * 2).to_integral_value(
        rounding=decimal.ROUND_HALF_UP) / decimal.Decimal(2)
    return float(min(decimal.Decimal(5), max(decimal.Decimal(1), snapped)))


def _oracle_ces(features):
    mean = float(np.mean(features))
    if any(f == 5.0 for f in features):
        mean = max(mean, 3.0)
    return _oracle_likert(mean)


def _oracle_nes(grounding, synergy, atmosphere):
    effective = min(synergy, 2.0) if grounding < 0.5 else synergy
    return float(np.dot([0.3, 0.4, 0.3], [grounding * 5.0, effective, atmosphere]))


def _oracle_occm(required, detected):
    total = sum(len(set(r)) for r in required)
    hit = sum(len(set(r) & set(d)) for r, d in zip(required, detected))
    return 100.0 if total == 0 else 100.0 * hit / total


def _oracle_cp(crops, anchor):
    return float(np.mean([float(np.dot(c, anchor)) > 0.98 for c in crops]))


def _unit(rng, dim=8):
    vec = rng.normal(size=dim)
    return vec / np.linalg.norm(vec)


def test_criterion_1_formulas_match_oracles(capsys):
    rng = np.random.default_rng(20260822)
    n_cases = 10_000
    worst = 0.0
    start = time.perf_counter()

    for i in range(n_cases):
        levels = rng.integers(0, 4, size=int(rng.integers(1, 13))).tolist()
        worst = max(worst, abs(formulas.nsr(levels) - _oracle_nsr(levels)))

        dims = rng.uniform(0.0, 5.0, size=5).tolist()
        count = (int(rng.integers(0, 200)) if i % 9 else
                 [10, 14, 15, 24, 25, 30, 39, 40, 54, 55, 60][i // 9 % 11])
        worst = max(worst, abs(formulas.ser(dims, count) - _oracle_ser(dims, count)))

        features = rng.uniform(1.0, 5.0, size=5).tolist()
        if i % 7 == 0:
            features[0] = 5.0
        worst = max(worst, abs(formulas.ces(features) - _oracle_ces(features)))

        grounding = 0.5 if i % 11 == 0 else float(rng.uniform(0.0, 1.0))
        synergy = float(rng.uniform(1.0, 5.0))
        atmosphere = float(rng.uniform(1.0, 5.0))
        worst = max(worst, abs(formulas.nes(grounding, synergy, atmosphere)
                               - _oracle_nes(grounding, synergy, atmosphere)))

    alphabet = np.array(["Arthur", "Mira", "Jonas", "Vera", "Elena", "Tomas"])
    for _ in range(n_cases):
        shots = int(rng.integers(0, 5))
        required = [set(rng.choice(alphabet, size=int(rng.integers(0, 5)),
                                   replace=False)) for _ in range(shots)]
        detected = [set(rng.choice(alphabet, size=int(rng.integers(0, 5)),
                                   replace=False)) for _ in range(shots)]
        worst = max(worst, abs(formulas.occm(required, detected)
                               - _oracle_occm(required, detected)))

    for _ in range(n_cases):
        anchor = _unit(rng)
        crops = []
        for _ in range(int(rng.integers(1, 6))):
            alpha = float(rng.uniform(0.9, 1.0))
            blend = alpha * anchor + (1.0 - alpha) * _unit(rng)
            crops.append(blend / np.linalg.norm(blend))
        worst = max(worst, abs(formulas.cp(crops, anchor)
                               - _oracle_cp(crops, anchor)))

    for _ in range(n_cases):
        n = int(rng.integers(3, 40))
        xs = rng.normal(size=n)
        ys = xs * float(rng.uniform(-2.0, 2.0)) + rng.normal(size=n) * 0.5
        worst = max(worst, abs(formulas.pearson(xs.tolist(), ys.tolist())
                               - float(np.corrcoef(xs, ys)[0, 1])))

    elapsed = time.perf_counter() - start
    ok = worst <= 1e-9 and elapsed < 10.0
    _report(capsys, 1, "formulas match independent oracles", ok,
            f"max |delta| {worst:.2e}, {elapsed:.1f}s")
    assert ok, f"max |delta| {worst}, elapsed {elapsed:.1f}s"


# -- criterion 2: documented reference values --------------------------


def _clean_temporal_response():
    return {
        "critique_type": "temporal_integrity_check",
        "leakage_audit": {"leakage_flag": False, "leaked_chunk_id": None,
                          "leaked_at_fraction": None, "detail": ""},
        "visual_decay_audit": {
            "histogram_analysis": {"contrast_collapse": False}},
        "motion_audit": {"plausible_transition": True},
        "continuity_score": 8.5,
    }


def _burnout_fires(clipping):
    registry = build_mock_registry(seed=7)
    judge = ScriptedJudge({"temporal_audit": [_clean_temporal_response()]},
                          fallback=DefaultScriptedJudge(7))
    registry.bind("judge", judge, ProviderConfig(retries=1))
    plan = ChunkPlan(chunk_id=1, duration=5.0, narrative_focus="walking",
                     current_goal="reach the door",
                     boundary=BoundaryGuard(next_scene_event="the door opens"),
                     camera="Slow Pan", denoise_strength=0.5)
    tail = TailState(segment_index=1, chunk_id=1, frame_ref="", motion_cue="",
                     highlight_clipping=clipping, contrast=40.0)
    _, violations = postproduction.audit_temporal(make_segment(), [plan], tail,
                                                  registry)
    return any(v.kind is ViolationKind.BURN_OUT for v in violations)


def test_criterion_2_reference_values(capsys):
    failures = []

    refined, _ = production.refine_layout(
        BBoxLayout(entries={"hero": (0.45, 0.5, 0.55, 0.9)}))
    box = refined.entries["hero"]
    expected = (0.425, 0.5, 0.575, 0.9)
    if any(abs(a - b) > 1e-12 for a, b in zip(box, expected)):
        failures.append(f"guardrail expansion gave {box}")

    control = ControlBundle(segment_index=1, phase=Phase.PROD,
                            params=GenerationParams(guidance_scale=3.5, seed=1))
    revised = production.revise_production(control, [ViolationSignal(
        kind=ViolationKind.STICKER_EFFECT, severity=Severity.MILD)])
    if revised.params.guidance_scale != 4.5:
        failures.append(f"guidance 3.5 -> {revised.params.guidance_scale}")

    if postproduction.BURNOUT_CLIPPING != 0.8:
        failures.append(f"clipping threshold {postproduction.BURNOUT_CLIPPING}")
    if not _burnout_fires(0.85):
        failures.append("burn-out silent at clipping 0.85")
    if _burnout_fires(0.8):
        failures.append("burn-out fired at the 0.8 threshold itself")

    if formulas.nes(1.0, 5.0, 5.0) != 5.0:
        failures.append("nes(1, 5, 5) != 5")
    if abs(formulas.nes(0.6, 4.0, 3.0) - (0.3 * 3.0 + 0.4 * 4.0 + 0.3 * 3.0)) > 1e-9:
        failures.append("nes weights are not 0.3/0.4/0.3")
    if abs(formulas.nes(0.4, 5.0, 5.0) - (0.3 * 2.0 + 0.4 * 2.0 + 0.3 * 5.0)) > 1e-9:
        failures.append("low grounding does not cap synergy at 2")
    if abs(formulas.nes(0.5, 5.0, 5.0) - 4.25) > 1e-9:
        failures.append("cap wrongly applied at grounding == 0.5")

    for count, expected_mult in ((10, 0.6), (30, 1.0), (60, 1.2)):
        if formulas.quantity_multiplier(count) != expected_mult:
            failures.append(f"multiplier({count}) != {expected_mult}")

    calls = {"n": 0}

    def execute(control):
        calls["n"] += 1
        return "artifact"

    scores = iter([6.0, 6.9, 5.0, 6.9, 6.8])
    best, trace = loop.run_segment_loop(
        loop.PhaseHooks(
            plan=lambda a: ControlBundle(segment_index=1, phase=Phase.PROD),
            execute=execute,
            verify=lambda c, a: ([], next(scores))),
        loop.LoopConfig(), phase=Phase.PROD, segment_index=1)
    if calls["n"] != 5:
        failures.append(f"budget allowed {calls['n']} generator calls")
    if best.attempt != 1 or best.score != 6.9:
        failures.append(f"fallback picked attempt {best.attempt} ({best.score})")
    if trace.status != "budget_exhausted_best_of":
        failures.append(f"exhaustion status {trace.status!r}")

    ok = not failures
    _report(capsys, 2, "reference values reproduced", ok,
            "; ".join(failures) if failures else "6/6 checks")
    assert ok, failures


# -- criterion 3: guardrail property sweep -----------------------------


def test_criterion_3_guardrail_properties(capsys):
    rng = np.random.default_rng(8422)
    n_cases = 10_000
    failures = []
    infeasible = 0
    start = time.perf_counter()

    for i in range(n_cases):
        entries = {}
        for j in range(int(rng.integers(1, 5))):
            x0 = float(rng.uniform(0.0, 0.95))
            x1 = min(1.0, x0 + float(rng.uniform(0.005, 0.5)))
            y0 = float(rng.uniform(0.0, 0.5))
            y1 = min(1.0, y0 + float(rng.uniform(0.1, 0.5)))
            entries[f"e{j}"] = (x0, y0, x1, y1)
        try:
            refined, _ = production.refine_layout(BBoxLayout(entries=entries))
        except InfeasibleLayout:
            infeasible += 1
            continue
        boxes = refined.entries
        for name, box in boxes.items():
            if production.box_width(box) < production.MIN_BOX_WIDTH - 1e-9:
                failures.append(f"case {i}: {name} too narrow: {box}")
        names = sorted(boxes)
        for a in range(len(names)):
            for b in range(a + 1, len(names)):
                ratio = production.overlap_ratio(boxes[names[a]], boxes[names[b]])
                if ratio > production.MAX_OVERLAP_RATIO + 1e-9:
                    failures.append(f"case {i}: overlap ratio {ratio:.4f}")
        again, report = production.refine_layout(refined)
        if report.actions or again.entries != boxes:
            failures.append(f"case {i}: refine not idempotent")

    elapsed = time.perf_counter() - start
    ok = not failures and elapsed < 30.0
    _report(capsys, 3, "guardrail postconditions and idempotence", ok,
            f"{n_cases - infeasible} refined, {infeasible} infeasible, "
            f"{elapsed:.1f}s")
    assert ok, failures[:5] or f"elapsed {elapsed:.1f}s"


# -- criterion 4: closed-loop invariants on a long story ---------------


def test_criterion_4_closed_loop_invariants(capsys, tmp_path):
    start = time.perf_counter()
    registry = build_mock_registry(seed=1, n_segments=30)
    bundle = run_story(UserPrompt(text=PROMPT), registry, runs_dir=tmp_path,
                       run_id="invariants", base_seed=1, clock=TickClock())
    elapsed = time.perf_counter() - start
    failures = []
    if len(bundle.results) != 30:
        failures.append(f"{len(bundle.results)} segments instead of 30")

    diffs_checked = 0
    for result in bundle.results:
        for ltrace in result.traces.values():
            for earlier, later in zip(ltrace.records, ltrace.records[1:]):
                if earlier.error is not None:
                    continue  # replanned from scratch, not a revision
                allowed = loop.allowed_fields_for(
                    v.kind for v in earlier.violations)
                changed = loop.changed_fields(earlier.control, later.control)
                diffs_checked += 1
                if not changed <= allowed:
                    failures.append(f"segment {result.index}: revision touched "
                                    f"{sorted(changed - allowed)}")

    store = RunStore(bundle.run_dir)
    for prev, cur in zip(bundle.results, bundle.results[1:]):
        tail_meta = media.clip_comment(
            store.get(cur.video.metadata["chunks"][0]))["tail"]
        expected = postproduction.extract_tail(
            store.get(prev.video.ref), segment_index=prev.index,
            chunk_id=len(prev.video.metadata["chunks"]) or 1, store=store)
        if tail_meta is None or tail_meta["frame_ref"] != expected.frame_ref:
            failures.append(f"segment {cur.index} not chained to "
                            f"segment {prev.index}'s tail")

    close_ups = 0
    for segment, result in zip(bundle.script.segments, bundle.results):
        if segment.visual.shot_type != "Close-up":
            continue
        close_ups += 1
        for record in result.traces["post"].records:
            for plan in record.control.temporal:
                for forbidden in CLOSE_UP_FORBIDDEN_MOTIONS:
                    if forbidden.lower() in plan.camera.lower():
                        failures.append(f"segment {segment.index}: forbidden "
                                        f"camera {plan.camera!r}")
    if close_ups == 0:
        failures.append("story produced no Close-up segments to check")

    ok = not failures and elapsed < 60.0
    _report(capsys, 4, "closed-loop invariants over a 30-segment story", ok,
            f"{diffs_checked} revision diffs, {close_ups} close-ups, "
            f"{elapsed:.1f}s")
    assert ok, failures[:5] or f"elapsed {elapsed:.1f}s"


# -- criterion 5: run determinism through the CLI ----------------------


def test_criterion_5_cli_determinism(capsys, tmp_path):
    def invoke(root):
        return cli_main(["run", PROMPT, "--mock", "--seed", "1",
                         "--runs-dir", str(root), "--run-id", "same"])

    code_a = invoke(tmp_path / "a")
    code_b = invoke(tmp_path / "b")
    capsys.readouterr()
    manifest_a = (tmp_path / "a" / "same" / "manifest.json").read_bytes()
    manifest_b = (tmp_path / "b" / "same" / "manifest.json").read_bytes()
    trace_a = (tmp_path / "a" / "same" / "trace.jsonl").read_bytes()
    trace_b = (tmp_path / "b" / "same" / "trace.jsonl").read_bytes()

    ok = (code_a == code_b and manifest_a == manifest_b and trace_a == trace_b)
    _report(capsys, 5, "repeated mock runs are byte-identical", ok,
            f"exit {code_a}/{code_b}, manifest {len(manifest_a)}B, "
            f"trace {len(trace_a)}B")
    assert ok


# -- criterion 6: audio metrics dash out on video-only runs ------------


def test_criterion_6_dash_convention(capsys, tmp_path):
    config = tmp_path / "muse.toml"
    config.write_text("[mock]\nsilent = true\nn_segments = 2\n")
    code_run = cli_main(["run", "A lighthouse keeper walks the cliff path",
                         "--mock", "--seed", "2", "--config", str(config),
                         "--runs-dir", str(tmp_path), "--run-id", "video-only"])
    code_eval = cli_main(["eval", str(tmp_path / "video-only")])
    capsys.readouterr()
    scores = json.loads(
        (tmp_path / "video-only" / "scores.json").read_text())["metrics"]
    dashed = [c for c in AUDIO_COLUMNS if scores[c] == "-"]

    ok = code_run == 0 and code_eval == 0 and len(dashed) == len(AUDIO_COLUMNS)
    _report(capsys, 6, "video-only run dashes every audio metric", ok,
            f"{len(dashed)}/{len(AUDIO_COLUMNS)} dashed")
    assert ok, {c: scores[c] for c in AUDIO_COLUMNS}


# -- criterion 7: correlation sanity -----------------------------------


def test_criterion_7_pearson_sanity(capsys):
    xs = list(range(1, 9))
    linear = formulas.pearson(xs, [2 * x + 1 for x in xs])
    anti = formulas.pearson(xs, [-3 * x + 10 for x in xs])
    long_xs = list(range(1, 51))
    shallow = formulas.pearson(long_xs, [0.5 * x - 7 for x in long_xs])

    ok = linear == 1.0 and anti == -1.0 and shallow == 1.0
    _report(capsys, 7, "pearson is exactly +/-1 on linear data", ok,
            f"{linear}, {anti}, {shallow}")
    assert ok, (linear, anti, shallow)
