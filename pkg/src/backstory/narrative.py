"""Rewriting third-person stories into the first person.

The protagonist is the most frequently mentioned character, counting both
name occurrences and pronouns attributed by recency and gender.  Their
mentions are substituted slot by slot (subject -> "I", object -> "me",
possessive -> "my"/"mine", reflexive -> "myself") with simple-present verb
agreement right after a rewritten subject.  Every substitution is recorded
in a trace so downstream consumers can audit the rewrite.

Everything here is a closed rule table over tokens; no parser is involved,
so the usual rule-based caveats apply and are visible in the trace.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from importlib import resources

from .errors import NoProtagonistError, ValidationError
from .vocab import detokenize, split_tokens

FIRST_PERSON = {"i", "me", "my", "mine", "myself"}
MALE_PRONOUNS = {"he", "him", "his", "himself"}
FEMALE_PRONOUNS = {"she", "her", "hers", "herself"}
_ALL_PRONOUNS = (MALE_PRONOUNS | FEMALE_PRONOUNS | FIRST_PERSON |
                 {"it", "its", "itself", "they", "them", "their", "theirs",
                  "themselves", "we", "us", "our", "ours", "you", "your",
                  "yours", "yourself", "this", "that", "these", "those"})

_SENTENCE_END = {".", "!", "?"}

_PREPOSITIONS = {"to", "at", "with", "for", "from", "of", "on", "in", "by",
                 "about", "against", "after", "before", "around", "over",
                 "under", "near", "beside", "behind", "without", "toward",
                 "towards", "upon", "across", "into", "onto", "off", "than",
                 "like", "between"}

_COORDINATORS = {"and", "but", "or", "so", "then", "while", "when", "because", ","}

# common story verbs whose past tense carries no -ed suffix
_IRREGULAR_PAST = {"was", "were", "went", "got", "saw", "said", "took", "made",
                   "came", "found", "felt", "knew", "thought", "told", "gave",
                   "ran", "ate", "drank", "bought", "lost", "left", "met",
                   "put", "read", "kept", "began", "brought", "heard", "held",
                   "stood", "wrote", "won", "woke", "spoke", "sat", "slept",
                   "sent", "paid", "grew", "flew", "fell", "drove", "chose",
                   "broke", "became", "wore", "spent", "taught", "threw",
                   "rode", "rose", "sang", "let", "hit", "hurt", "cut", "had",
                   "caught", "built", "did", "forgot", "swam", "drew", "led"}

_AUXILIARIES = {"is", "was", "has", "does", "goes", "will", "would", "can",
                "could", "may", "might", "must", "should", "shall", "did",
                "do", "am", "are", "have"}

_AGREE_IRREGULAR = {"is": "am", "was": "was", "has": "have", "does": "do",
                    "goes": "go"}

# s-final words that are never simple-present verbs in our stories
_NOT_VERBS = {"his", "hers", "its", "this", "thus", "yes", "sometimes",
              "always", "perhaps", "besides", "across", "towards", "is",
              "was", "has", "does", "goes", "news", "less", "unless"}

# tokens that rule out a following-noun reading for "her"/"his"
_NON_NOUN_FOLLOWERS = (_SENTENCE_END | _PREPOSITIONS | _COORDINATORS |
                       {";", ":", "there", "here", "today", "yesterday",
                        "too", "well", "now", "again", "once", "away",
                        "back", "home", "up", "down", "out"})


@dataclass(frozen=True)
class Mention:
    position: int   # token index in the case-preserving token stream
    surface: str
    kind: str       # "name" or "pronoun"


@dataclass(frozen=True)
class RewriteStep:
    position: int
    original: str
    replacement: str
    rule: str


@dataclass
class Story:
    story_id: str
    source_text: str
    text: str
    token_ids: list[int] = field(default_factory=list)
    protagonist: str | None = None
    trace: list[RewriteStep] = field(default_factory=list)
    warning: str | None = None


def _load_name_table() -> dict[str, str]:
    table: dict[str, str] = {}
    blob = resources.files("backstory.data").joinpath("first_names.txt").read_text()
    for line in blob.splitlines():
        if not line.strip():
            continue
        name, gender = line.split("\t")
        table[name] = gender
    return table


NAME_GENDERS = _load_name_table()


def _sentence_initial_flags(tokens: list[str]) -> list[bool]:
    """True for the first word-like token of each sentence."""
    flags = []
    start = True
    for tok in tokens:
        if tok in _SENTENCE_END:
            flags.append(False)
            start = True
        elif not tok[:1].isalnum():
            flags.append(False)  # quotes/commas don't consume the slot
        else:
            flags.append(start)
            start = False
    return flags


def _is_capitalized_word(tok: str) -> bool:
    return tok[:1].isupper() and tok.isalpha()


def _pronoun_gender(folded: str) -> str | None:
    if folded in MALE_PRONOUNS:
        return "m"
    if folded in FEMALE_PRONOUNS:
        return "f"
    return None


def _collect_characters(tokens: list[str]) -> tuple[list[str], dict[int, str]]:
    """Candidate character names and the positions where each is named."""
    initial = _sentence_initial_flags(tokens)
    candidates: set[str] = set()
    for pos, tok in enumerate(tokens):
        if not _is_capitalized_word(tok):
            continue
        folded = tok.lower()
        if folded in _ALL_PRONOUNS:
            continue
        if initial[pos]:
            if folded in NAME_GENDERS:
                candidates.add(folded)
        else:
            candidates.add(folded)
    positions: dict[int, str] = {}
    for pos, tok in enumerate(tokens):
        folded = tok.lower()
        if folded in candidates and _is_capitalized_word(tok):
            positions[pos] = folded
    return sorted(candidates), positions


def _attribute_pronouns(tokens: list[str], name_positions: dict[int, str],
                        default_char: str | None = None) -> dict[int, str]:
    """Attach each gendered pronoun to the most recent compatible character."""
    owners: dict[int, str] = {}
    for pos, tok in enumerate(tokens):
        gender = _pronoun_gender(tok.lower())
        if gender is None:
            continue
        owner = None
        for npos in sorted(name_positions, reverse=True):
            if npos >= pos:
                continue
            name = name_positions[npos]
            if NAME_GENDERS.get(name, gender) == gender:
                owner = name
                break
        if owner is None:
            for ppos in sorted(owners, reverse=True):
                if ppos < pos and _pronoun_gender(tokens[ppos].lower()) == gender:
                    owner = owners[ppos]
                    break
        if owner is None:
            owner = default_char
        if owner is not None:
            owners[pos] = owner
    return owners


def find_protagonist(text: str) -> tuple[str, list[Mention]]:
    """Most-mentioned character and every mention attributable to them.

    A story already told in the first person has the narrator as its
    protagonist: the first-person tokens are returned as mentions and a
    rewrite of them is the identity.
    """
    tokens = split_tokens(text)
    if not tokens:
        raise NoProtagonistError("no character found: empty story")

    first_person = [p for p, t in enumerate(tokens) if t.lower() in FIRST_PERSON]
    if first_person:
        mentions = [Mention(p, tokens[p], "pronoun") for p in first_person]
        return "I", mentions

    _, name_positions = _collect_characters(tokens)
    if not name_positions:
        raise NoProtagonistError("no character found")
    owners = _attribute_pronouns(tokens, name_positions)

    counts: dict[str, int] = {}
    first_seen: dict[str, int] = {}
    for pos, name in name_positions.items():
        counts[name] = counts.get(name, 0) + 1
        first_seen[name] = min(first_seen.get(name, pos), pos)
    for pos, name in owners.items():
        counts[name] = counts.get(name, 0) + 1
    protagonist = min(counts, key=lambda n: (-counts[n], first_seen[n]))

    owners = _attribute_pronouns(tokens, name_positions, default_char=protagonist)
    mentions = [Mention(p, tokens[p], "name")
                for p, n in name_positions.items() if n == protagonist]
    mentions += [Mention(p, tokens[p], "pronoun")
                 for p, n in owners.items() if n == protagonist]
    mentions.sort(key=lambda m: m.position)
    return protagonist, mentions


def _third_person_strip(word: str) -> str | None:
    """Strip a simple-present -s/-es suffix, or None if it doesn't look 3sg."""
    lower = word.lower()
    if lower in _NOT_VERBS or len(lower) <= 3 or not lower.endswith("s"):
        return None
    if lower.endswith("ies") and len(lower) > 4:
        return lower[:-3] + "y"
    for suffix in ("sses", "shes", "ches", "xes", "zzes"):
        if lower.endswith(suffix):
            return lower[:-2]
    if lower.endswith(("ss", "us", "is")):
        return None
    return lower[:-1]


# -ed words that are not past-tense verbs (nouns, adjectives, adverbs)
_ED_EXCEPTIONS = {
    "shed", "bed", "red", "sled", "seabed", "hundred", "sacred", "naked",
    "wicked", "rugged", "hatred", "kindred", "speed", "breed", "creed",
    "greed", "steed", "bleed", "feed", "seed", "weed", "deed", "reed",
    "need", "indeed",
}


def _past_tense_form(word: str) -> bool:
    return word.endswith("ed") and len(word) > 3 and word not in _ED_EXCEPTIONS


def _looks_like_verb(tok: str) -> bool:
    folded = tok.lower()
    if folded in _IRREGULAR_PAST or folded in _AUXILIARIES:
        return True
    if _past_tense_form(folded):
        return True
    if folded in _AGREE_IRREGULAR:
        return True
    return _third_person_strip(folded) is not None


def _name_slot(tokens: list[str], pos: int, initial: list[bool]) -> str:
    if pos + 1 < len(tokens) and tokens[pos + 1] == "'s":
        return "possessive"
    if initial[pos]:
        return "subject"
    if pos + 1 < len(tokens) and _looks_like_verb(tokens[pos + 1]):
        return "subject"
    prev = tokens[pos - 1].lower() if pos > 0 else ""
    if prev in _PREPOSITIONS:
        return "object"
    if prev in _COORDINATORS:
        return "subject"
    return "object"


def _followed_by_noun(tokens: list[str], pos: int) -> bool:
    """Dependent-possessive test for his/her: is the next token a noun?

    Only unambiguous verb forms (auxiliaries, suffixed or listed past tense)
    rule a noun reading out; a bare -s word like "books" stays a noun.
    """
    if pos + 1 >= len(tokens):
        return False
    nxt = tokens[pos + 1].lower()
    if nxt in _NON_NOUN_FOLLOWERS or not nxt[:1].isalpha():
        return False
    if nxt in _AUXILIARIES or nxt in _IRREGULAR_PAST:
        return False
    return not _past_tense_form(nxt)


def _match_case(replacement: str, sentence_initial: bool) -> str:
    if replacement == "I" or not sentence_initial:
        return replacement
    return replacement[0].upper() + replacement[1:]


def first_personify(text: str, mentions: list[Mention]) -> tuple[str, list[RewriteStep]]:
    """Substitute the given mentions with first-person forms.

    Returns the rewritten text plus one trace step per touched token.  A
    story whose mentions are already first person comes back unchanged.
    """
    tokens = split_tokens(text)
    for m in mentions:
        if m.position >= len(tokens) or tokens[m.position] != m.surface:
            raise ValidationError("mention does not match the story text")
    initial = _sentence_initial_flags(tokens)
    trace: list[RewriteStep] = []
    out: list[str | None] = list(tokens)

    for m in sorted(mentions, key=lambda m: m.position):
        pos = m.position
        folded = m.surface.lower()
        if folded in FIRST_PERSON:
            continue  # already first person; identity
        agree_pos: int | None = None
        if m.kind == "name":
            slot = _name_slot(tokens, pos, initial)
            if slot == "possessive":
                out[pos] = _match_case("my", initial[pos])
                out[pos + 1] = None  # the clitic 's collapses into "my"
                trace.append(RewriteStep(pos, m.surface + "'s", out[pos],
                                         "name-possessive"))
                continue
            if slot == "subject":
                out[pos] = "I"
                trace.append(RewriteStep(pos, m.surface, "I", "name-subject"))
                agree_pos = pos + 1
            else:
                out[pos] = _match_case("me", initial[pos])
                trace.append(RewriteStep(pos, m.surface, out[pos], "name-object"))
        else:
            if folded in ("he", "she"):
                out[pos] = "I"
                trace.append(RewriteStep(pos, m.surface, "I", "pronoun-subject"))
                agree_pos = pos + 1
            elif folded == "him":
                out[pos] = _match_case("me", initial[pos])
                trace.append(RewriteStep(pos, m.surface, out[pos], "pronoun-object"))
            elif folded == "his":
                rep = "my" if _followed_by_noun(tokens, pos) else "mine"
                out[pos] = _match_case(rep, initial[pos])
                trace.append(RewriteStep(pos, m.surface, out[pos],
                                         f"pronoun-possessive-{rep}"))
            elif folded == "her":
                if _followed_by_noun(tokens, pos):
                    out[pos] = _match_case("my", initial[pos])
                    trace.append(RewriteStep(pos, m.surface, out[pos],
                                             "pronoun-possessive-my"))
                else:
                    out[pos] = _match_case("me", initial[pos])
                    trace.append(RewriteStep(pos, m.surface, out[pos],
                                             "pronoun-object"))
            elif folded == "hers":
                out[pos] = _match_case("mine", initial[pos])
                trace.append(RewriteStep(pos, m.surface, out[pos],
                                         "pronoun-possessive-mine"))
            elif folded in ("himself", "herself"):
                out[pos] = _match_case("myself", initial[pos])
                trace.append(RewriteStep(pos, m.surface, out[pos],
                                         "pronoun-reflexive"))
        if agree_pos is not None and agree_pos < len(tokens):
            verb = tokens[agree_pos]
            folded_verb = verb.lower()
            if folded_verb in _AGREE_IRREGULAR:
                fixed = _AGREE_IRREGULAR[folded_verb]
            else:
                fixed = _third_person_strip(folded_verb)
            if fixed is not None and fixed != folded_verb:
                out[agree_pos] = fixed
                trace.append(RewriteStep(agree_pos, verb, fixed, "verb-agreement"))

    rewritten = detokenize([t for t in out if t is not None])
    return rewritten, trace


def rewrite_pronoun_fallback(text: str) -> tuple[str, list[RewriteStep]]:
    """Rewrite the he/she chain headed by the first gendered pronoun."""
    tokens = split_tokens(text)
    genders = [_pronoun_gender(t.lower()) for t in tokens]
    lead = next((g for g in genders if g is not None), None)
    if lead is None:
        raise NoProtagonistError("no character found")
    pron_set = MALE_PRONOUNS if lead == "m" else FEMALE_PRONOUNS
    mentions = [Mention(p, tokens[p], "pronoun")
                for p, t in enumerate(tokens) if t.lower() in pron_set]
    return first_personify(text, mentions)


def adapt_story(story_id: str, text: str) -> Story:
    """Full rewrite: find the protagonist, first-personify, keep the trace.

    Falls back to the pronoun-chain rewrite when no named character exists;
    if there are no gendered pronouns either, the story is passed through
    with a warning.
    """
    try:
        protagonist, mentions = find_protagonist(text)
        rewritten, trace = first_personify(text, mentions)
        return Story(story_id=story_id, source_text=text, text=rewritten,
                     protagonist=protagonist, trace=trace)
    except NoProtagonistError:
        pass
    try:
        rewritten, trace = rewrite_pronoun_fallback(text)
        return Story(story_id=story_id, source_text=text, text=rewritten,
                     protagonist=None, trace=trace,
                     warning="no named character; rewrote leading pronoun chain")
    except NoProtagonistError:
        return Story(story_id=story_id, source_text=text, text=text,
                     protagonist=None, trace=[],
                     warning="no protagonist; story left unchanged")
