"""Initial coding, expert feedback, and the quality tally.

Runs coding round 1 against the deterministic keyword-echo backend, applies
the kind of feedback an expert would give (focus points, exclusions, an
exemplar code), re-codes as round 2, and prints the rounds side by side.
Closes with a quality tally over a simulated annotation pass.

Run:  python demos/02_coding_with_feedback.py
"""

import shutil
from pathlib import Path

from themekit import (
    AnalysisContext,
    Gateway,
    KeywordScenario,
    PipelineConfig,
    QualityAnnotation,
    RunStore,
    Runner,
    ScriptedBackend,
    Verdict,
    generate_corpus,
    keyword_map,
    render_tally_text,
    tally_quality,
)
from themekit.pipeline import Feedback

run_dir = Path(__file__).parent / "output" / "feedback-run"
if run_dir.exists():
    shutil.rmtree(run_dir)

corpus = generate_corpus(12, seed=21)
context = AnalysisContext(
    research_questions=("What typical kinds of theft does the corpus describe?",),
    theme_specification="a recurring pattern of how the theft was committed and what was taken",
)

store = RunStore.create(run_dir, corpus, context, config={})
backend = ScriptedBackend(default=KeywordScenario(keyword_map(), k=3))
runner = Runner(store, Gateway(backend, audit=store.audit_sink), config=PipelineConfig(seed=21))

# --- round 1: autonomous coding -----------------------------------------------

round1 = runner.run_initial_coding(1, seed=21)
print("round 1 codes (autonomous):")
for code in round1[:4]:
    print(f"  {code.data_point_id}: {code.code_text}")

# --- expert feedback -------------------------------------------------------------

feedback = Feedback(
    positive=("target", "modus operandi", "seriousness", "intent"),
    negative=("multiplicity of the offense", "value of stolen goods"),
    exemplars=("vehicle theft with forceful entry and disassembly of vehicles",),
)
new_round = runner.apply_feedback(feedback)
print(f"\nfeedback appended; context advanced to round {new_round}")
for requirement in store.context(new_round).custom_requirements:
    print(f"  - {requirement}")

# --- round 2: improved codes -------------------------------------------------------

round2 = runner.run_initial_coding(new_round, seed=21)
print("\nbefore / after, side by side:")
before = {c.data_point_id: c.code_text for c in round1}
for code in round2[:4]:
    print(f"  {code.data_point_id}: {before[code.data_point_id]!r}  ->  {code.code_text!r}")

# --- simulated quality annotation pass ----------------------------------------------

verdicts = []
for i, code in enumerate(round2):
    if i % 11 == 10:
        verdict = Verdict.NOT_HOW
    elif i % 7 == 6:
        verdict = Verdict.NOT_WHAT
    else:
        verdict = Verdict.OK
    verdicts.append(QualityAnnotation(code.data_point_id, new_round, verdict))
store.append_annotations(verdicts)

print("\nquality tally for round 2:")
print(render_tally_text(tally_quality(store.annotations(new_round))))

print(f"\nevery prompt and response of this session is in {run_dir / 'audit.jsonl'}")
store.close()
