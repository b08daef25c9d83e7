//! Prompt templates and parsers for the structured replies they ask for.

mod parse;
mod templates;

pub use parse::{
    format_aggregate_reply, parse_agent_reply, parse_aggregate_reply, parse_list_reply,
    ParsedAgentReply, ParsedAggregate,
};
pub use templates::{
    format_agent_responses, format_documents_list, format_history, PromptError, TemplateName,
    TemplateSet,
};
