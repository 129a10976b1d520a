"""Corpus ingestion and token-aware batching, step by step.

Fabricates a small theft-flavored corpus, writes it in the line-delimited
ingestion format, reads it back, and shows how documents are packed into
prompt-sized batches (including what happens to a document too large for any
single prompt).

Run:  python demos/01_corpus_and_batching.py
"""

from pathlib import Path

from themekit import (
    TokenBudget,
    count_tokens,
    dump_dataset,
    generate_corpus,
    load_dataset,
    pack_batches,
    truncate_to_fit,
)

out_dir = Path(__file__).parent / "output"
out_dir.mkdir(exist_ok=True)

# --- 1. A synthetic corpus with planted themes -------------------------------

corpus = generate_corpus(40, seed=7, oversize_every=17)
corpus_path = out_dir / "corpus.jsonl"
corpus_path.write_text(dump_dataset(corpus), encoding="utf-8")
print(f"wrote {len(corpus)} documents to {corpus_path}")

reloaded = load_dataset(corpus_path)
lo, hi = reloaded.text_length_range()
print(f"text lengths range from {lo} to {hi} characters")
print(f"example document: {reloaded.points[0].text[:100]}...")
print(f"gold theme (held out from all prompts): {reloaded.points[0].gold_theme}")

# --- 2. Token accounting ------------------------------------------------------

sample = reloaded.points[0].text
print(f"\nheuristic token count of the example: {count_tokens(sample)}"
      f" (~= ceil({len(sample)} chars / 4))")

# --- 3. Packing under a budget --------------------------------------------------

budget = TokenBudget(
    context_limit=2048,      # whole window shared by prompt and completion
    completion_reserve=256,  # space the completion may fill
    fixed_overhead=700,      # system message + non-batch user parts
    per_item_overhead=14,    # wrapper around each document
)
print(f"\ncontent capacity per prompt: {budget.content_capacity} tokens")

batches = pack_batches(reloaded, budget)
print(f"packed into {len(batches)} batches (shortest documents first):")
for batch in batches:
    cost = batch.content_cost(budget)
    print(f"  batch {batch.index}: {len(batch.items):2d} documents, {cost:4d} tokens")

# --- 4. Truncation of an oversized document --------------------------------------

monster = max((p.text for p in reloaded.points), key=len)
print(f"\nlongest document costs {count_tokens(monster)} tokens;"
      f" capacity is {budget.content_capacity}")
fitted = truncate_to_fit(monster, budget.content_capacity - budget.per_item_overhead)
print(f"after truncation: {count_tokens(fitted)} tokens")
marker_at = fitted.index("[...]")
print(f"head ends ...{fitted[marker_at - 30:marker_at]!r}")
print(f"tail starts {fitted[marker_at + 5:marker_at + 35]!r}")
