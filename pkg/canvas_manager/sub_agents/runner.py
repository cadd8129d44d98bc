####################################################################################################
####################  CanvasX | Sub-Agent Runner                 ###################################
####################  Developed by: DatSciX                      ###################################
####################################################################################################

"""
Sub-Agent Runner
One-shot question to an ADK agent outside the chat loop: a throwaway in-memory session, one user
message, the text of the final response.
"""

import asyncio
import logging
import uuid

from google.adk.agents import LlmAgent
from google.adk.runners import Runner
from google.adk.sessions import InMemorySessionService
from google.genai import types

from ..errors import EndpointError

logger = logging.getLogger(__name__)

APP_NAME = "canvasx"
USER_ID = "planner"


async def ask_agent_async(agent: LlmAgent, text: str) -> str:
    sessions = InMemorySessionService()
    session = await sessions.create_session(app_name=APP_NAME, user_id=USER_ID, session_id=uuid.uuid4().hex)
    runner = Runner(agent=agent, app_name=APP_NAME, session_service=sessions)
    message = types.Content(role="user", parts=[types.Part(text=text)])
    answer = ""
    async for event in runner.run_async(user_id=USER_ID, session_id=session.id, new_message=message):
        if event.is_final_response() and event.content and event.content.parts:
            answer = "".join(part.text or "" for part in event.content.parts)
    return answer


def ask_agent(agent: LlmAgent, text: str) -> str:
    """Blocking wrapper; any model or transport failure surfaces as EndpointError."""
    try:
        answer = asyncio.run(ask_agent_async(agent, text))
    except Exception as e:
        logger.error(f"AGENT [Call Failed]: {agent.name}", exc_info=True)
        raise EndpointError(f"agent '{agent.name}' failed: {e}") from e
    if not answer.strip():
        raise EndpointError(f"agent '{agent.name}' returned an empty answer")
    logger.info(f"AGENT [Answered]: {agent.name} ({len(answer)} chars)")
    return answer
