#![allow(dead_code)]

pub mod commands;
pub mod oracle;
