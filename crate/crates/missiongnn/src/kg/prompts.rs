//! Prompt templates for the three generation stages plus their
//! error-correction variants. The word count and parent cap are
//! parameterized; everything else is fixed text.

const REFERENCE_AND_PERSONA: &str = "Reference:\n\
A knowledge graph have hierarchical levels starting from naive observations to final prediction.\n\
Each level has the following inference words directly connected only with the previous level words.\n\
There are NOT the same words in different levels.\n\
\n\
Persona:\n\
You are a knowledge graph engineer who generates knowledge graph that will help to classify images.\n";

pub fn initial_system(n_words: usize) -> String {
    format!(
        "{REFERENCE_AND_PERSONA}\n\
Objective:\n\
You will be provided a subject.\n\
Follow these steps to answer the user queries.\n\
\n\
Step 1.\n\
Observe {n_words} important words from a image which is related to the provided subject.\n\
Do not respond anything for this step.\n\
\n\
Step 2.\n\
Create a comma-separated list of the words that you observed.\n\
The comma-separated list you just created is first level of the knowledge graph.\n\
Keep in mind.\n\
Do not respond anything for this step.\n\
\n\
Step 3.\n\
Print first level of the knowledge graph on the first line.\n\
No extraneous text or characters other than the comma-separated list."
    )
}

pub fn initial_user(subject: &str) -> String {
    format!("Subject: {subject}")
}

pub fn node_correction(dup_nodes: &[String], subject: &str) -> String {
    format!(
        "The following concepts already appear in previous levels: {}\n\
You must generate new concepts that can be inferred from previous level concepts.\n\
Correct this error and give a corrected answer.\n\
No extraneous text or characters other than the comma-separated list.\n\
Subject: {subject}",
        dup_nodes.join(", ")
    )
}

pub fn next_system(n_words: usize) -> String {
    format!(
        "{REFERENCE_AND_PERSONA}\n\
Objective:\n\
You will be provided a subject.\n\
And you will be provided comma-separated list which is the previous level of the knowledge graph.\n\
And you will be provided suggested keywords.\n\
Follow these steps to answer the user queries.\n\
\n\
Step 1.\n\
Create words related to the provided subject which can be explained from combination of several words from previous level.\n\
Reference suggested keywords for this step. If you have better keywords, suggest them.\n\
Do not respond anything for this step.\n\
\n\
Step 2.\n\
Create a comma-separated list of the words that you just created in step 1.\n\
The length of comma-seperated list must be {n_words}.\n\
The comma-separated list you just created is next level of the knowledge graph.\n\
Keep in mind.\n\
Do not respond anything for this step.\n\
\n\
Print next level of the knowledge graph on the first line.\n\
No extraneous text or characters other than the comma-separated list."
    )
}

pub fn next_user(subject: &str, prev_list: &str, suggested: &str) -> String {
    format!(
        "Subject: {subject}\n\
Comma-separated list: {prev_list}\n\
Suggested keywords: {suggested}"
    )
}

pub fn next_correction(dup_nodes: &[String], subject: &str, prev_list: &str, suggested: &str) -> String {
    format!(
        "The following concepts already appear in previous levels: {}\n\
You must generate new concepts that can be inferred from previous level concepts.\n\
Correct this error and give a corrected answer.\n\
No extraneous text or characters other than the comma-separated list.\n\
Subject: {subject}\n\
Comma-separated list: {prev_list}\n\
Suggested keywords: {suggested}",
        dup_nodes.join(", ")
    )
}

pub fn edge_system(max_parents: usize) -> String {
    format!(
        "{REFERENCE_AND_PERSONA}\n\
Objective:\n\
You will be provided a subject and a comma-separated list.\n\
Follow these steps to answer the user queries.\n\
\n\
Step 1.\n\
Select maximum {max_parents} words from provided comma-separated list which are related to inferring provided subject.\n\
Do not respond anything for this step.\n\
\n\
Step 2.\n\
Create a comma-separated list of the selected words that you observed.\n\
Do not respond anything for this step.\n\
\n\
Step 3.\n\
Print the comma-separated list.\n\
No extraneous text or characters other than the comma-separated list."
    )
}

pub fn edge_user(subject: &str, prev_list: &str) -> String {
    format!("Subject: {subject}\nComma-separated list: {prev_list}")
}

pub fn edge_correction(not_appeared: &[String], subject: &str, prev_list: &str) -> String {
    format!(
        "The following concepts do not appear in the previous level nodes: {}\n\
You must select concepts from the previous level concepts that can be important clues to infer the new concept.\n\
Correct this error and give a corrected answer.\n\
No extraneous text or characters other than the comma-separated list.\n\
Subject: {subject}\n\
Comma-separated list: {prev_list}",
        not_appeared.join(", ")
    )
}

/// Extracts the value of a `Name: ...` line from a prompt body. Fixture
/// backends use this to recover the word lists they must react to.
pub fn extract_field<'a>(prompt: &'a str, name: &str) -> Option<&'a str> {
    let tag = format!("{name}:");
    prompt
        .lines()
        .find_map(|l| l.strip_prefix(&tag))
        .map(str::trim)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn count_is_parameterized() {
        assert!(initial_system(20).contains("Observe 20 important words"));
        assert!(initial_system(30).contains("Observe 30 important words"));
        assert!(next_system(20).contains("must be 20"));
        assert!(edge_system(5).contains("maximum 5 words"));
    }

    #[test]
    fn user_prompt_keeps_empty_suggestions_field() {
        let u = next_user("shooting", "gun, crowd", "");
        assert!(u.contains("Suggested keywords: "));
        assert_eq!(extract_field(&u, "Suggested keywords"), Some(""));
        assert_eq!(extract_field(&u, "Comma-separated list"), Some("gun, crowd"));
    }
}
