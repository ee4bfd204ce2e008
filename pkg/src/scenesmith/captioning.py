"""Captions and training prompts.

Short captions are pure templates over the composition; detailed
captions come from the caption backend under a hard token budget
counted by the text encoder itself, never approximated locally.
"""

from __future__ import annotations

import re
import warnings
from dataclasses import dataclass

from .errors import EmptyCompletion, PreconditionError

TOKEN_BUDGET = 77
DETAIL_INSTRUCTION = (
    "Describe what you see in this image in detail. "
    "The number of words is limited to 30"
)


class TruncatedCaption(UserWarning):
    """A detailed caption stayed over budget and had to be cut."""


@dataclass
class CaptionPair:
    short: str
    detailed: str | None
    token_count_short: int
    token_count_detailed: int | None


@dataclass
class TrainingPrompt:
    text: str
    uses_global_token: bool
    concept_repetitions: int
    background_clause: str


def join_labels(labels):
    if len(labels) == 1:
        return labels[0]
    return ", ".join(labels[:-1]) + " and " + labels[-1]


def compose_short_caption(concepts, background_prompt):
    """"a photo of cat and dog in the garden" for (cat, dog)."""
    labels = [c.category_label for c in concepts]
    return f"a photo of {join_labels(labels)} {background_prompt}"


def enforce_token_budget(text, token_counter, budget=TOKEN_BUDGET):
    count = token_counter.count_text_tokens(text)
    return count <= budget, count


def truncate_to_budget(text, token_counter, budget=TOKEN_BUDGET):
    """Drop trailing whole words until the text fits the budget."""
    words = text.split()
    while words:
        candidate = " ".join(words)
        if token_counter.count_text_tokens(candidate) <= budget:
            return candidate
        words.pop()
    return ""


def recaption_detailed(
    image,
    captioner,
    token_counter,
    budget=TOKEN_BUDGET,
    max_attempts=3,
    seed=0,
):
    """Detailed caption under the token budget.

    Asks again with a shifted seed while the answer is over budget;
    after the attempt limit the last answer is truncated at a word
    boundary and a TruncatedCaption warning is issued.

    Returns (caption, token_count, truncated_flag).
    """
    if max_attempts < 1:
        raise PreconditionError("max_attempts must be >= 1")
    text = ""
    for attempt in range(max_attempts):
        text = captioner.caption_image(
            image, instruction=DETAIL_INSTRUCTION, seed=seed + attempt
        )
        if not text or not text.strip():
            raise EmptyCompletion("caption backend returned empty text")
        ok, count = enforce_token_budget(text, token_counter, budget)
        if ok:
            return text, count, False
    text = truncate_to_budget(text, token_counter, budget)
    count = token_counter.count_text_tokens(text) if text else 0
    warnings.warn(
        f"caption stayed over {budget} tokens after {max_attempts} attempts, truncated",
        TruncatedCaption,
    )
    return text, count, True


def build_training_prompt(
    composition, concepts, background_prompt, repetitions, use_global_token=True
):
    """Training-time prompt text, format v1.

    "a photo of {global_token} scene with" + the "{rare_token} {label}"
    pairs interleaved round-robin `repetitions` times + the background
    clause.  Round-robin keeps repeated mentions of one concept from
    clumping together.
    """
    if repetitions < 1:
        raise PreconditionError("repetitions must be >= 1")
    phrases = []
    for _ in range(repetitions):
        for c in concepts:
            phrases.append(f"{c.rare_token} {c.category_label}")
    body = join_labels(phrases)
    if use_global_token:
        text = f"a photo of {composition.global_token} scene with {body} {background_prompt}"
    else:
        text = f"a photo of {body} {background_prompt}"
    return TrainingPrompt(
        text=text,
        uses_global_token=use_global_token,
        concept_repetitions=repetitions,
        background_clause=background_prompt,
    )


def parse_training_prompt(prompt, concepts):
    """Recover (rare tokens seen, background clause) from a prompt's text.

    The inverse check for build_training_prompt: every concept's
    "{rare_token} {label}" pair must be present, and the text must end
    with the background clause.
    """
    found = set()
    for c in concepts:
        if re.search(
            re.escape(f"{c.rare_token} {c.category_label}"), prompt.text
        ):
            found.add(c.rare_token)
    return found, prompt.background_clause if prompt.text.endswith(
        prompt.background_clause
    ) else None
