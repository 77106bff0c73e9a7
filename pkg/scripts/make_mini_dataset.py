"""Regenerate the bundled mini dataset (20 queries, 200 passages).

Deterministic: same seed, same bytes. Run from the repo root:

    python scripts/make_mini_dataset.py
"""

from __future__ import annotations

import json
import random
from pathlib import Path

OUT = Path(__file__).resolve().parent.parent / "src" / "ragsift" / "data" / "mini"

COUNTRIES = [
    "Veldoria", "Ashkarun", "Brelland", "Corvath", "Drellmark",
    "Ellowyn", "Farsted", "Gormany", "Hestria", "Ithlon",
    "Jurvania", "Kestrelia", "Lomarr", "Mirenthal", "Norvayne",
    "Ostrelia", "Pellano", "Quorrin", "Rostavia", "Sundmyr",
]
CITIES = [
    "Amberport", "Bryncastle", "Caldermoor", "Durnwich", "Eastvale",
    "Fennharbor", "Glasmere", "Hollowgate", "Ironspire", "Jadefall",
    "Kilnbury", "Larkmouth", "Mistholm", "Northreach", "Oakenfeld",
    "Pinecrest", "Quillford", "Ravenstead", "Silverbrook", "Thornfield",
]
FILLER = [
    "{country} is known for its long coastline and fishing villages.",
    "The national dish of {country} is a spiced barley stew.",
    "{country} exports timber, wool, and ceramic tiles.",
    "Mountain trails in {country} attract hikers every summer.",
    "The {country} football league has twelve clubs.",
    "Winters in {country} are mild along the southern plains.",
    "{country} mints a copper coin called the dram.",
    "Folk music from {country} features a six-stringed lute.",
]
GOLD_TEMPLATES = [
    "The capital of {country} is {city}.",
    "{city} serves as the capital city of {country}.",
    "Government offices of {country} are located in its capital, {city}.",
    "Travel guides describe {city}, the capital of {country}, as a river town.",
    "{city} became the capital of {country} after the charter of 1892.",
    "The parliament of {country} sits in {city}, the nation's capital.",
]


def main() -> None:
    rng = random.Random(20240817)
    OUT.mkdir(parents=True, exist_ok=True)

    corpus_lines = []
    query_lines = []
    run_lines = []
    qrels_lines = []
    answer_lines = []
    evidence_lines = []
    prediction_lines = []

    for qi in range(20):
        qid = f"q{qi + 1:03d}"
        country, city = COUNTRIES[qi], CITIES[qi]
        query_lines.append({"query_id": qid, "text": f"What is the capital of {country}?"})

        gold_count = rng.choice([2, 2, 3, 3, 4, 5, 6])
        doc_ids = [f"p{qi * 10 + j + 1:03d}" for j in range(10)]
        gold_ids = set(rng.sample(doc_ids, gold_count))

        gold_templates = rng.sample(GOLD_TEMPLATES, gold_count)
        g = 0
        for j, doc_id in enumerate(doc_ids):
            if doc_id in gold_ids:
                text = gold_templates[g].format(country=country, city=city)
                grade = rng.choice([1, 2, 2, 3])
                g += 1
            else:
                text = rng.choice(FILLER).format(country=country)
                grade = 0
            rec = {"doc_id": doc_id, "text": text}
            if j % 3 == 0:
                rec["title"] = f"{country} facts {j + 1}"
            corpus_lines.append(rec)
            # keep some explicit grade-0 judgments in the qrels
            if grade > 0 or j % 2 == 0:
                qrels_lines.append(f"{qid} 0 {doc_id} {grade}")

        shuffled = list(doc_ids)
        rng.shuffle(shuffled)
        for rank, doc_id in enumerate(shuffled, 1):
            score = round(12.0 - rank * 0.7 + rng.random() * 0.05, 4)
            run_lines.append(f"{qid} Q0 {doc_id} {rank} {score} stage1")

        answer_lines.append({"query_id": qid, "answers": [city]})
        evidence_lines.append({"query_id": qid, "evidence": sorted(gold_ids)})

        roll = rng.random()
        if roll < 0.7:
            predicted = city
        elif roll < 0.9:
            predicted = f"the capital is {city}"
        else:
            predicted = CITIES[(qi + 7) % 20]
        prediction_lines.append({"query_id": qid, "answer": predicted})

    (OUT / "corpus.jsonl").write_text(
        "".join(json.dumps(r) + "\n" for r in corpus_lines), encoding="utf-8"
    )
    (OUT / "queries.jsonl").write_text(
        "".join(json.dumps(r) + "\n" for r in query_lines), encoding="utf-8"
    )
    (OUT / "run.trec").write_text("".join(line + "\n" for line in run_lines), encoding="utf-8")
    (OUT / "qrels.txt").write_text("".join(line + "\n" for line in qrels_lines), encoding="utf-8")
    (OUT / "answers.jsonl").write_text(
        "".join(json.dumps(r) + "\n" for r in answer_lines), encoding="utf-8"
    )
    (OUT / "evidence.jsonl").write_text(
        "".join(json.dumps(r) + "\n" for r in evidence_lines), encoding="utf-8"
    )
    (OUT / "predictions.jsonl").write_text(
        "".join(json.dumps(r) + "\n" for r in prediction_lines), encoding="utf-8"
    )
    print(f"wrote mini dataset to {OUT}")


if __name__ == "__main__":
    main()
