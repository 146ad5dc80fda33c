from radstruct.workflow.auth import TokenAuth
from radstruct.workflow.service import EngineService
from radstruct.workflow.session import Actor
from radstruct.workflow.store import SessionStore

__all__ = ["Actor", "EngineService", "SessionStore", "TokenAuth"]
