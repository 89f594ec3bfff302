"""Candidate summary generation.

The five-step generation prompt is reproduced exactly as published,
including its quirks (the doubled Step 5, "dishcarge", "synotpic"); the
source document is appended after the trailing "Context : " line. Generation
defaults to temperature 0.7 since it benefits from diversity, unlike the
evaluation calls which all run at 0.
"""

from __future__ import annotations

from ..errors import ResponseParseError
from ..gateway import CompletionRequest, Gateway, ModelRef

GENERATION_PROMPT = """You are tasked with generating a high quality clinical discharge summary for the provided input text INPUT_DOC. The summary has to be very relevant to the input document and cover the most important aspects of the input. Follow the following steps:
Step 1: Generate the most common sections that usually appear in a clinical discharge summary.
Step 2: Not all the sections from Step 1 will have content. See which of those sections have contents from the INPUT_DOC. Remove the sections that don't have information.
Step 3 : Use the following concepts to generate appropriate content. These are not Sections. Concepts:
patient information and service type, diagnosis given at the time of admission,  brief summary of initial presentation and diagnostic evaluation, pertinent physical findings relevant to diagnoses, goals of care; level of treatment,code status(e.g. curative,life-prolonging palliative, and symptomatic palliative), course in hospital; synotpic,problem-based description of sequential events and respective evaluations, treatments, and prognoses, hospital consults; description of specialty and/or allied health consults, procedures in hospital; a list of procedures with key findings and date, principal discharge diagnosis or main reason for admission and all additional pertinent diagnoses where applicable,  discharge medications with specific description of new, altered, and discontinued medications and rationale for changes,  lab tests and investigative results, tests ordered during the hospitalization that are pending at the time of discharge, outcome of care/condition at discharge; sense of the patient health status at discharge includes functional status, and cognitive status, outstanding issues for follow-up and recommendations to a recipient health-care provider during discharge, appointments after discharge including person responsible for scheduling, care provider, discharge instructions; list of information/education provided to the patient during discharge, main author of the discharge summary or attending clinician.
Step 4: Put the generated content in a coherent order. Format in such a way that the dishcarge summary has an excellent coherence, fluency, and consistency. Remember to use the sections you generated in Step 1, don't make the concepts in Step 2 as a section, they are just suggestive concepts not sections.
Step 5: Remove sections with no information. Dont put 'not specified' or 'not mentioned' or 'none specified' in a section. Just remove everything for that section including the section header.
Step 5: Return the final discharge summary with all the remaining sections that have contents. Remember to remove sections with no information.
Context : """


def build_generation_prompt(note: str) -> str:
    if not note.strip():
        raise ValueError("note must be non-empty")
    return GENERATION_PROMPT + note


def generation_request(
    note: str,
    provider: ModelRef,
    temperature: float = 0.7,
    max_output_tokens: int = 4096,
) -> CompletionRequest:
    return CompletionRequest(
        provider_id=provider.provider_id,
        model=provider.model,
        user_text=build_generation_prompt(note),
        temperature=temperature,
        max_output_tokens=max_output_tokens,
    )


def generate_summary(
    note: str,
    gateway: Gateway,
    provider: ModelRef,
    temperature: float = 0.7,
) -> str:
    """Generate one candidate summary; returns the model text verbatim."""
    result = gateway.complete(generation_request(note, provider, temperature))
    if not result.text.strip():
        raise ResponseParseError(f"generator {provider} returned empty output")
    return result.text
