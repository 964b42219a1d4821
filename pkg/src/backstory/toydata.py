"""Seeded synthetic corpora: dialogs, stories, personas, entailment pairs.

The generator is template-driven so every artifact is regenerable
bit-exactly from its seed.  The shape is deliberately lopsided: dialog
responses come from a handful of templates (low lexical diversity, like
small-talk), while stories draw on per-topic word banks and named
characters (high lexical diversity).  That asymmetry is what the
evaluation harness measures.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ValidationError
from .vocab import STOPWORDS

# Each topic: (word bank, past-tense verbs). Banks are pairwise disjoint so
# cross-topic text shares no topical content words.
TOPICS: list[tuple[str, list[str], list[str]]] = [
    ("gardening",
     ["garden", "plants", "flowers", "roses", "tomatoes", "weeds", "soil",
      "seeds", "lawn", "shed", "hedge", "greenhouse"],
     ["planted", "watered", "pruned", "harvested"]),
    ("cooking",
     ["kitchen", "pasta", "soup", "bread", "stew", "recipes", "sauce",
      "spices", "oven", "pots", "dinner", "herbs"],
     ["simmered", "chopped", "baked", "stirred"]),
    ("music",
     ["guitar", "songs", "chords", "drums", "stage", "melodies", "concerts",
      "strings", "piano", "tunes", "band", "rhythm"],
     ["strummed", "rehearsed", "performed", "composed"]),
    ("running",
     ["running", "marathons", "miles", "sneakers", "races", "track",
      "trails", "sprints", "stamina", "mornings", "jogging", "finish"],
     ["sprinted", "jogged", "raced", "stretched"]),
    ("painting",
     ["painting", "portraits", "canvas", "brushes", "easel", "colors",
      "sketches", "gallery", "frames", "murals", "paint", "palette"],
     ["sketched", "painted", "framed", "displayed"]),
    ("fishing",
     ["fishing", "river", "trout", "rods", "bait", "boats", "lakes",
      "nets", "hooks", "catch", "docks", "reels"],
     ["cast", "reeled", "hooked", "rowed"]),
    ("astronomy",
     ["telescope", "stars", "planets", "comets", "orbits", "galaxies",
      "eclipses", "meteors", "charts", "nebulae", "moons", "skies"],
     ["observed", "charted", "tracked", "sighted"]),
    ("chess",
     ["chess", "knights", "pawns", "bishops", "openings", "endgames",
      "boards", "clocks", "tournaments", "gambits", "checkmate", "rooks"],
     ["castled", "sacrificed", "studied", "blundered"]),
    ("travel",
     ["travel", "trains", "suitcases", "maps", "passports", "hostels",
      "cities", "tickets", "journeys", "borders", "stations", "luggage"],
     ["boarded", "packed", "wandered", "crossed"]),
    ("dogs",
     ["dogs", "leashes", "parks", "puppies", "bones", "collars", "kennels",
      "treats", "walks", "fetch", "tails", "paws"],
     ["walked", "fetched", "groomed", "leashed"]),
]

ATTRIBUTE_TEMPLATES = ["i like {0} and {1}", "i enjoy my {0} and {1}"]

RESPONSE_TEMPLATES = [
    "i like {0} and {1}",
    "yes i enjoy {0} and {1} a lot",
    "my {0} and {1} keep me busy",
    "i spend my time with {0} and {1}",
]

USER_PROMPTS = [
    "what do you do for fun",
    "tell me about yourself",
    "how do you spend your days",
    "what are you into these days",
]

OPENER_USER = ["hello there", "hi"]
OPENER_AGENT = ["hello how are you", "hi nice to meet you"]

STORY_TEMPLATES = [
    ("{Name} loved {pos} {w0}. Every weekend {subj} {v0} the {w1} near the"
     " {w2}. One day {Name} {v1} the {w3} by the {w4}. {Subj} {v2} {pos} {w5}"
     " for hours. Friends admired {pos} {w0} and {pos} {w3}."),
    ("{Name} kept {pos} {w0} behind the house. {Subj} {v0} the {w1} each"
     " morning before work. Once {Name} {v1} some {w2} beside the {w3}."
     " Neighbors often praised {pos} {w4}."),
    ("{Name} spent years with {pos} {w0}. {Subj} {v0} the {w1} and the {w2}"
     " all summer. One evening {Name} {v1} the {w3} near the {w4}. {Subj} told"
     " everyone about {pos} {w5}."),
    ("{Name} always carried {pos} {w0} around. {Subj} {v0} the {w1} when the"
     " season began. Later {Name} {v1} {pos} {w2} beside the {w3}. The whole"
     " street talked about {pos} {w4}."),
]

MALE_NAMES = ["tom", "john", "mike", "max", "leo",
              "paul", "mark", "peter", "james", "david"]
FEMALE_NAMES = ["mary", "anna", "sara", "emma", "lisa",
                "nina", "julia", "laura", "karen", "emily"]


@dataclass
class ToySizes:
    dialogs: int = 100
    stories: int = 50
    personas: int = 12
    pairs: int = 120

    def __post_init__(self) -> None:
        if min(self.dialogs, self.stories, self.personas, self.pairs) <= 0:
            raise ValidationError("corpus sizes must be positive")


@dataclass
class ToyCorpora:
    dialogs: list[dict]
    stories: list[dict]
    personas: list[dict]
    pairs: list[dict]


def content_words(text: str) -> set[str]:
    """Lowercased alphabetic tokens that are not glue words."""
    words = set()
    for raw in text.split():
        word = raw.strip(".,!?;:").lower()
        if word.isalpha() and word not in STOPWORDS:
            words.add(word)
    return words


def _attribute(topic_idx: int, rng: np.random.Generator) -> str:
    _, bank, _ = TOPICS[topic_idx]
    pair = (bank[0], bank[1]) if rng.integers(2) == 0 else (bank[1], bank[0])
    template = ATTRIBUTE_TEMPLATES[rng.integers(len(ATTRIBUTE_TEMPLATES))]
    return template.format(*pair)


def _response(topic_idx: int, rng: np.random.Generator) -> str:
    _, bank, _ = TOPICS[topic_idx]
    template = RESPONSE_TEMPLATES[rng.integers(len(RESPONSE_TEMPLATES))]
    return template.format(bank[0], bank[1])


def _story(i: int, rng: np.random.Generator) -> dict:
    topic_idx = i % len(TOPICS)
    _, bank, verbs = TOPICS[topic_idx]
    if rng.integers(2) == 0:
        name = MALE_NAMES[rng.integers(len(MALE_NAMES))]
        subj, pos = "he", "his"
    else:
        name = FEMALE_NAMES[rng.integers(len(FEMALE_NAMES))]
        subj, pos = "she", "her"
    template = STORY_TEMPLATES[rng.integers(len(STORY_TEMPLATES))]
    # w0/w1 always carry the attribute words for this topic, so every story
    # shares vocabulary with the attributes that should retrieve it
    offset = int(rng.integers(2, 9))
    words = {"w0": bank[i % 2], "w1": bank[1 - i % 2]}
    for k in range(2, 6):
        words[f"w{k}"] = bank[offset + k - 2]
    v = [str(x) for x in rng.permutation(verbs)]
    text = template.format(Name=name.capitalize(), Subj=subj.capitalize(),
                           subj=subj, pos=pos, v0=v[0], v1=v[1], v2=v[2],
                           **words)
    return {"id": f"s{i:04d}", "text": text}


def _dialog(personas: list[dict], topics_of: dict[str, list[int]],
            rng: np.random.Generator) -> dict:
    persona = personas[rng.integers(len(personas))]
    attrs = persona["attributes"]
    ref = int(rng.integers(len(attrs)))
    topic_idx = topics_of[persona["id"]][ref]
    prompt = USER_PROMPTS[rng.integers(len(USER_PROMPTS))]
    if rng.integers(2) == 0:
        history = [{"speaker": "user", "text": prompt}]
    else:
        history = [
            {"speaker": "user",
             "text": OPENER_USER[rng.integers(len(OPENER_USER))]},
            {"speaker": "agent",
             "text": OPENER_AGENT[rng.integers(len(OPENER_AGENT))]},
            {"speaker": "user", "text": prompt},
        ]
    return {"history": history, "persona": list(attrs),
            "response": _response(topic_idx, rng)}


def generate_toy_corpora(seed: int, sizes: ToySizes | None = None) -> ToyCorpora:
    """Build all four corpora from one seeded stream of draws."""
    sizes = sizes or ToySizes()
    rng = np.random.default_rng(seed)

    personas: list[dict] = []
    topics_of: dict[str, list[int]] = {}
    for j in range(sizes.personas):
        n_attrs = int(rng.integers(3, 6))
        topic_ids = [int(t) for t in
                     rng.choice(len(TOPICS), size=n_attrs, replace=False)]
        pid = f"p{j:03d}"
        personas.append({"id": pid,
                         "attributes": [_attribute(t, rng) for t in topic_ids]})
        topics_of[pid] = topic_ids

    stories = [_story(i, rng) for i in range(sizes.stories)]
    dialogs = [_dialog(personas, topics_of, rng) for _ in range(sizes.dialogs)]

    pairs = []
    for k in range(sizes.pairs):
        topic_idx = int(rng.integers(0, len(TOPICS)))
        attr = _attribute(topic_idx, rng)
        if k % 2 == 0:
            pairs.append({"attribute": attr,
                          "response": _response(topic_idx, rng),
                          "label": "entail"})
        else:
            other = (topic_idx + 3) % len(TOPICS)
            pairs.append({"attribute": attr,
                          "response": _response(other, rng),
                          "label": "neutral"})

    return ToyCorpora(dialogs=dialogs, stories=stories, personas=personas,
                      pairs=pairs)


# ------------------------------------------------------------------- files

def write_jsonl(path: str | Path, rows: list[dict]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row, sort_keys=True, ensure_ascii=False))
            fh.write("\n")


def read_jsonl(path: str | Path) -> list[dict]:
    rows = []
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                rows.append(json.loads(line))
            except json.JSONDecodeError as exc:
                raise ValidationError(
                    f"{path}:{line_no}: bad JSON line: {exc}") from exc
    return rows


def write_corpora(out_dir: str | Path, corpora: ToyCorpora) -> dict[str, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "dialogs": out / "dialogs.jsonl",
        "stories": out / "stories.jsonl",
        "personas": out / "personas.jsonl",
        "pairs": out / "pairs.jsonl",
    }
    write_jsonl(paths["dialogs"], corpora.dialogs)
    write_jsonl(paths["stories"], corpora.stories)
    write_jsonl(paths["personas"], corpora.personas)
    write_jsonl(paths["pairs"], corpora.pairs)
    return paths


def corpus_texts(corpora: ToyCorpora) -> list[str]:
    """Every text the vocabulary must cover."""
    texts: list[str] = []
    for dialog in corpora.dialogs:
        texts.extend(turn["text"] for turn in dialog["history"])
        texts.extend(dialog["persona"])
        texts.append(dialog["response"])
    texts.extend(story["text"] for story in corpora.stories)
    for persona in corpora.personas:
        texts.extend(persona["attributes"])
    for pair in corpora.pairs:
        texts.append(pair["attribute"])
        texts.append(pair["response"])
    return texts
