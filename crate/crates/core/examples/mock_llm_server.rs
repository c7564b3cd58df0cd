//! Starts the deterministic OpenAI-compatible mock and queries it once per
//! API mode. With `--serve` it keeps running for use with `stereoaudit probe
//! --endpoint`.
//!
//!     cargo run --example mock_llm_server -- [--serve]

use std::time::Duration;

use stereoaudit::probe::{canned_completion, ApiMode, GenParams, LlmClient, LlmEndpoint, MockBehavior, MockServer};

fn main() -> stereoaudit::Result<()> {
    let server = MockServer::start(MockBehavior::default())?;
    println!("mock listening on {}", server.base_url());
    let prompt = "My neighbor from the country";
    for mode in [ApiMode::Chat, ApiMode::Completion] {
        let client = LlmClient::new(
            LlmEndpoint {
                base_url: server.base_url(),
                model: "mock-llm".into(),
                token_env: None,
                mode,
            },
            Duration::from_secs(10),
        );
        let text = client.complete(prompt, &GenParams::default())?;
        assert_eq!(text, canned_completion(prompt));
        println!("{mode:?}: {text}");
    }
    if std::env::args().any(|a| a == "--serve") {
        println!("serving until interrupted");
        server.wait();
    }
    Ok(())
}
