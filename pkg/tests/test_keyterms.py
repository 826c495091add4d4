import sys

import pytest

from zoomer.errors import EmptyPrompt, NoTermsFound
from zoomer.keyterms import (
    STOPWORDS,
    KeyTermSet,
    SubprocessExtractor,
    extract_key_terms,
    split_prompt_sections,
)


def test_split_question_and_inline_options():
    sections = split_prompt_sections("What color is the car? A. red B. blue")
    assert sections.question == "What color is the car?"
    assert sections.options == ("A. red", "B. blue")
    assert sections.other == ""


def test_split_empty_prompt_raises():
    with pytest.raises(EmptyPrompt):
        split_prompt_sections("   \n  ")


def test_split_imperative_prompt_has_no_options():
    sections = split_prompt_sections("Describe the scene.")
    assert sections.question == "Describe the scene."
    assert sections.options == ()


def test_split_multiline_options_and_context():
    prompt = "The photo was taken outdoors.\nWhat animal is this?\n(A) dog\n(B) cat"
    sections = split_prompt_sections(prompt)
    assert sections.question == "What animal is this?"
    assert sections.options == ("(A) dog", "(B) cat")
    assert "outdoors" in sections.other


def test_extract_title_book():
    assert extract_key_terms("What is the title of the book?").terms == ("title", "book")


def test_extract_cacti():
    assert extract_key_terms("How many cacti are in the image?").terms == ("cacti",)


def test_extract_all_stopwords_raises():
    with pytest.raises(NoTermsFound):
        extract_key_terms("the of and")


def test_extract_empty_raises():
    with pytest.raises(EmptyPrompt):
        extract_key_terms("")


def test_terms_never_in_stopword_list():
    prompts = [
        "What is the man holding in his left hand?",
        "Where is the red bicycle parked near the fence?",
        "Count the number of birds sitting on the wire.",
    ]
    for prompt in prompts:
        for term in extract_key_terms(prompt).terms:
            assert term not in STOPWORDS


def test_extract_is_idempotent():
    terms = extract_key_terms("What brand of laptop is on the desk next to the lamp?")
    again = extract_key_terms(terms.joined())
    assert again.terms == terms.terms


def test_options_do_not_drive_terms():
    prompt = "What animal is shown?\nA. elephant\nB. giraffe\nC. zebra"
    result = extract_key_terms(prompt)
    assert result.source_span == "question"
    assert result.terms == ("animal",)
    for noise in ("elephant", "giraffe", "zebra"):
        assert noise not in result.terms


def test_no_duplicates_preserving_order():
    result = extract_key_terms("Is the cat near the dog or is the dog near the cat?")
    assert result.terms == ("cat", "near", "dog")


def test_subprocess_extractor_line_protocol():
    script = "import sys; [print(w.strip('.?')) for w in sys.stdin.read().split()]"
    extractor = SubprocessExtractor([sys.executable, "-c", script])
    result = extract_key_terms("Find the lighthouse on the cliff.", extractor)
    # extractor output is still stopword-filtered and deduplicated
    assert result.terms == ("find", "lighthouse", "cliff")


def test_subprocess_extractor_failure_raises():
    extractor = SubprocessExtractor([sys.executable, "-c", "import sys; sys.exit(3)"])
    with pytest.raises(NoTermsFound):
        extract_key_terms("Find the lighthouse.", extractor)


def test_keytermset_is_frozen_value():
    kts = KeyTermSet(terms=("a",), source_span="full")
    with pytest.raises(AttributeError):
        kts.terms = ()
