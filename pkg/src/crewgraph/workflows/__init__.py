from .codegen import APPROVED, REVISION_LIMIT, CodegenConfig, ReviewVerdict, build_codegen_graph, parse_verdict
from .email import EmailConfig, EmailRecord, build_email_graph, load_inbox
from .ticket import (
    TicketConfig,
    TicketDecision,
    build_history_index,
    build_ticket_graph,
    majority_category,
    parse_category,
    ticket_initial_state,
)

__all__ = [
    "APPROVED",
    "REVISION_LIMIT",
    "CodegenConfig",
    "EmailConfig",
    "EmailRecord",
    "ReviewVerdict",
    "TicketConfig",
    "TicketDecision",
    "build_codegen_graph",
    "build_email_graph",
    "build_history_index",
    "build_ticket_graph",
    "load_inbox",
    "majority_category",
    "parse_category",
    "parse_verdict",
    "ticket_initial_state",
]
