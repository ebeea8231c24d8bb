pub mod cli;
pub mod corpus;
pub mod evalkit;
pub mod llm;
pub mod promptkit;
pub mod runner;
pub mod scoreparse;
pub mod textstats;
