//! Fill masks through a chat-completions endpoint.
//!
//! Without arguments a scripted in-process endpoint answers (first reply out
//! of the candidate list, then a valid one), which shows the retry path. With
//! `LLM_ENDPOINT` set, the real endpoint is called and the key is read from
//! `OPENAI_API_KEY`.
//!
//!     cargo run --example llm_fill

use std::sync::atomic::{AtomicUsize, Ordering};

use salrank::corpus::{Level, Split};
use salrank::forge::llm::{ChatRequest, DEFAULT_KEY_VAR};
use salrank::forge::{build_hierarchy, fill_llm, ChatEndpoint, EndpointError, HttpChatEndpoint, PromptConfig};
use salrank::synth::{gen_corpus, SynthConfig};
use salrank::tagger::build_dictionary;

struct Scripted {
    calls: AtomicUsize,
}

impl ChatEndpoint for Scripted {
    fn complete(&self, req: &ChatRequest) -> Result<String, EndpointError> {
        let n = self.calls.fetch_add(1, Ordering::SeqCst);
        let prompt = &req.messages[0].content;
        let firsts: Vec<&str> = prompt
            .lines()
            .filter(|l| l.starts_with("[MASK"))
            .map(|l| l.rsplit_once("): ").map_or("", |(_, c)| c.split(", ").next().unwrap_or("")))
            .collect();
        if n == 0 {
            return Ok(format!("ANSWER: {}", vec!["banana"; firsts.len()].join(" | ")));
        }
        Ok(format!("ANSWER: {}", firsts.join(" | ")))
    }

    fn model_id(&self) -> String {
        "scripted".into()
    }
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let corpus = gen_corpus(&SynthConfig { n_train: 30, n_test: 2, ..Default::default() }, 0)?;
    let queries: Vec<_> = corpus.split(Split::Train).map(|s| s.query.clone()).collect();
    let dict = build_dictionary(&queries, "train")?;
    let q = &queries[0];
    let plan = &build_hierarchy(q, [0.25, 0.5, 0.75])?[1];
    let cfg = PromptConfig { dict_subset_size: 5, ..Default::default() };

    let endpoint: Box<dyn ChatEndpoint> = match std::env::var("LLM_ENDPOINT") {
        Ok(url) => Box::new(HttpChatEndpoint::from_env(&url, DEFAULT_KEY_VAR, &cfg.model)?),
        Err(_) => Box::new(Scripted { calls: AtomicUsize::new(0) }),
    };
    let out = fill_llm(plan, q, Level::Hn2, &dict, &cfg, endpoint.as_ref())?;
    println!("positive  {}", q.text());
    println!("negative  {}", out.record.negative_text);
    println!("attempts {}  fallback {}  model {:?}", out.attempts, out.record.fallback, out.record.model_id);
    Ok(())
}
