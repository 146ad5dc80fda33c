from radstruct.interop.fhir import export_fhir, import_fhir
from radstruct.interop.parity import parity_check
from radstruct.interop.sr import export_sr
from radstruct.interop.view import ExportView

__all__ = ["ExportView", "export_fhir", "export_sr", "import_fhir", "parity_check"]
