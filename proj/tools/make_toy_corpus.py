#!/usr/bin/env python3
# Copyright 2026 The Capy Authors.
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.
"""Regenerates the bundled toy corpora under data/."""

import json
import random
import sys
from pathlib import Path

SUBJECTS = ["dog", "cat", "skier", "child", "farmer", "pilot", "chef", "teacher", "bird", "horse"]
VERBS = ["chases", "carries", "watches", "paints", "finds", "throws", "cleans", "follows"]
OBJECTS = ["ball", "box", "kite", "basket", "ladder", "boat", "lamp", "map", "rope", "hat"]
PLACES = ["park", "garden", "kitchen", "mountain", "harbor", "field", "market", "forest"]
NOUNS = ["apple", "pear", "fig", "kiwi", "lemon", "mango", "plum", "grape", "melon", "peach",
         "cherry", "olive", "lime", "date", "berry"]
NUMBERS = ["one", "two", "three", "four", "five", "six", "seven", "eight", "nine", "ten"]
PLURALS = {"cat": "cats", "box": "boxes", "city": "cities", "knife": "knives", "bus": "buses",
           "baby": "babies", "leaf": "leaves", "dog": "dogs", "glass": "glasses", "party": "parties",
           "wolf": "wolves", "tree": "trees", "fox": "foxes", "lady": "ladies", "car": "cars"}

POS = ["wonderful", "great", "delightful", "excellent", "lovely", "brilliant"]
NEG = ["terrible", "awful", "boring", "dreadful", "poor", "disappointing"]
NEU = ["ordinary", "average", "acceptable", "standard", "typical", "plain"]
ITEMS = ["movie", "meal", "hotel", "concert", "book", "service"]

TOPICS = {
    "sports": ["team", "match", "coach", "goal", "league", "striker"],
    "politics": ["senate", "vote", "minister", "election", "policy", "parliament"],
    "science": ["telescope", "molecule", "experiment", "physics", "genome", "laboratory"],
    "business": ["market", "shares", "profit", "merger", "startup", "investors"],
}

COLORS = {"banana": "yellow", "lemon": "yellow", "cherry": "red", "strawberry": "red",
          "lime": "green", "kiwi": "green", "tomato": "red", "pear": "green", "corn": "yellow",
          "apple": "red", "avocado": "green", "pineapple": "yellow"}


def common_gen(rng, i, template):
    s, v, o, p = rng.choice(SUBJECTS), rng.choice(VERBS), rng.choice(OBJECTS), rng.choice(PLACES)
    concepts = [s, o, p]
    rng.shuffle(concepts)
    if template == "t1":
        ins = "Put the concepts together to form a sentence: " + ", ".join(concepts) + "."
    else:
        ins = "Write one sentence that uses all of these words: " + " ".join(concepts)
    return ins, f"The {s} {v} the {o} in the {p}."


def sort_words(rng, i, template):
    ws = rng.sample(NOUNS, rng.randint(4, 7))
    return "Sort these words alphabetically: " + " ".join(ws), " ".join(sorted(ws))


def reverse_list(rng, i, template):
    ws = rng.sample(NUMBERS + NOUNS, rng.randint(4, 7))
    return "Repeat the list backwards: " + " ".join(ws), " ".join(reversed(ws))


def pluralize(rng, i, template):
    ws = rng.sample(sorted(PLURALS), rng.randint(3, 6))
    return "Give the plural of each noun: " + ", ".join(ws), " ".join(PLURALS[w] for w in ws)


def copy_sentence(rng, i, template):
    s, v, o = rng.choice(SUBJECTS), rng.choice(VERBS), rng.choice(OBJECTS)
    sent = f"the {s} {v} a {o}"
    return "Copy the sentence exactly: " + sent, sent


def first_words(rng, i, template):
    ws = rng.sample(NOUNS + OBJECTS, 6)
    return "List the first three words of: " + " ".join(ws), " ".join(ws[:3])


def join_and(rng, i, template):
    ws = rng.sample(SUBJECTS, 3)
    return "Join the words with and: " + " ".join(ws), f"{ws[0]} and {ws[1]} and {ws[2]}"


def sentiment(rng, i, template):
    label = rng.choice(["positive", "negative", "neutral"])
    adj = rng.choice({"positive": POS, "negative": NEG, "neutral": NEU}[label])
    item = rng.choice(ITEMS)
    if template == "t1":
        ins = f"Review: The {item} was {adj}. Is this review positive, negative or neutral?"
    else:
        ins = f"How does the writer feel? \"A {adj} {item}, all things considered.\""
    return ins, label, ["positive", "negative", "neutral"]


def nli(rng, i, template):
    s, o, p = rng.choice(SUBJECTS), rng.choice(OBJECTS), rng.choice(PLACES)
    label = rng.choice(["yes", "no", "maybe"])
    premise = f"The {s} is holding a {o} in the {p}."
    if label == "yes":
        hyp = f"A {s} holds a {o}."
    elif label == "no":
        hyp = f"The {s} has nothing in its hands."
    else:
        hyp = f"The {s} bought the {o} yesterday."
    return f"Premise: {premise} Hypothesis: {hyp} Does the premise entail the hypothesis?", label, ["yes", "no", "maybe"]


def topic(rng, i, template):
    label = rng.choice(sorted(TOPICS))
    ws = rng.sample(TOPICS[label], 2)
    return f"Headline: New {ws[0]} report surprises the {ws[1]}. What is the topic?", label, sorted(TOPICS)


def parity(rng, i, template):
    n = rng.randint(10, 999)
    return f"Is the number {n} even or odd?", ("even" if n % 2 == 0 else "odd"), ["even", "odd"]


def fruit_color(rng, i, template):
    f = rng.choice(sorted(COLORS))
    p = rng.choice(PLACES)
    return f"What color is a ripe {f} from the {p}?", COLORS[f], ["red", "yellow", "green"]


def animal_fly(rng, i, template):
    a, p = rng.choice(SUBJECTS), rng.choice(PLACES)
    return f"Can the {a} in the {p} fly?", ("yes" if a in ("bird", "pilot") else "no"), ["yes", "no"]


def emit(rng, task_id, fn, kind, templates, n, start=0):
    rows, seen = [], set()
    i = start
    while len(rows) < n * len(templates):
        # Every template renders the same underlying draw.
        draw = rng.getrandbits(64)
        for t in templates:
            out = fn(random.Random(draw), i, t)
            if out[0] in seen:
                continue
            seen.add(out[0])
            row = {"task_id": task_id, "template_id": t, "instance_id": f"{task_id}-{i:04d}", "kind": kind,
                   "instruction": out[0], "ground_truth": out[1]}
            if kind == "classification":
                row["choices"] = out[2]
            rows.append(row)
        i += 1
    return rows


def main(out_dir):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rng = random.Random(20240611)

    adapt_tasks = [
        ("common_gen", common_gen, "generation", ["t1", "t2"]),
        ("sort_words", sort_words, "generation", ["t1"]),
        ("reverse_list", reverse_list, "generation", ["t1"]),
        ("pluralize", pluralize, "generation", ["t1"]),
        ("sentiment", sentiment, "classification", ["t1", "t2"]),
        ("nli", nli, "classification", ["t1"]),
        ("topic", topic, "classification", ["t1"]),
    ]
    train, test = [], []
    for task_id, fn, kind, templates in adapt_tasks:
        rows = emit(rng, task_id, fn, kind, templates, 36)
        # Split by instance id so templates of one instance stay together.
        ids = sorted({r["instance_id"] for r in rows})
        test_ids = set(ids[-12:])
        train += [r for r in rows if r["instance_id"] not in test_ids]
        test += [r for r in rows if r["instance_id"] in test_ids]

    pre_tasks = [
        ("copy_sentence", copy_sentence, "generation", ["t1"]),
        ("first_words", first_words, "generation", ["t1"]),
        ("join_and", join_and, "generation", ["t1"]),
        ("parity", parity, "classification", ["t1"]),
        ("fruit_color", fruit_color, "classification", ["t1"]),
        ("animal_fly", animal_fly, "classification", ["t1"]),
    ]
    pretrain = []
    for task_id, fn, kind, templates in pre_tasks:
        pretrain += emit(rng, task_id, fn, kind, templates, 30)

    for name, rows in [("toy_train.jsonl", train), ("toy_test.jsonl", test), ("toy_pretrain.jsonl", pretrain)]:
        with open(out / name, "w") as f:
            for r in rows:
                f.write(json.dumps(r) + "\n")
        print(name, len(rows))


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else "data")
