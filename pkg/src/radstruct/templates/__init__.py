from radstruct.templates.engine import (
    MissingField,
    PhraseEntry,
    ReportTemplate,
    TemplateMatch,
    TemplateRegistry,
    load_default_templates,
    load_templates,
    select_template,
    validate_completeness,
)

__all__ = [
    "MissingField",
    "PhraseEntry",
    "ReportTemplate",
    "TemplateMatch",
    "TemplateRegistry",
    "load_default_templates",
    "load_templates",
    "select_template",
    "validate_completeness",
]
