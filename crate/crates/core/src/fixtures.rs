//! Deterministic fixtures shared by tests, examples and the CLI smoke runs:
//! the worked director-age trace as a replay script, a synthetic two-hop
//! corpus with a rule-based oracle backend, and a local HTTP stub.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, BufReader, Read, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::{Arc, OnceLock};
use std::thread::JoinHandle;
use std::time::Duration;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use regex::Regex;
use serde_json::json;

use crate::corpus::Document;
use crate::eval::{paragraph_id, Dataset, QAExample};
use crate::extraction::Triple;
use crate::integration::{render_decision, IntegrationDecision, MARK_FACT_AFTER, MARK_FACT_BEFORE, MARK_QUERY};
use crate::llm::{CompletionRequest, OracleBackend, ReplayRule, ReplayScript, RoleTag};
use crate::text::normalize_text;

// ---------------------------------------------------------------------------
// Director-age case study

pub const CASE_STUDY_QUESTION: &str = "Which film has the director who is older, God'S Gift To Women or Aldri Annet Enn Bråk?";
pub const CASE_STUDY_GOLD: &str = "God'S Gift To Women";
pub const CASE_STUDY_NEXT_QUERY: &str = "What are the birth years of Michael Curtiz and Edith Carlmar?";

/// Core triples kept across both rounds, in the order they are accepted.
pub const CASE_STUDY_CORE: [[&str; 3]; 4] = [
    ["god s gift to women", "directed by", "michael curtiz"],
    ["aldri annet enn br k", "directed by", "edith carlmar"],
    ["edith carlmar", "born on", "15 november 1911"],
    ["michael curtiz", "born on", "december 24  1886"],
];

struct CaseDoc {
    id: &'static str,
    title: &'static str,
    body: &'static str,
    entities: &'static [&'static str],
    triples: &'static [[&'static str; 3]],
}

const CASE_DOCS: &[CaseDoc] = &[
    CaseDoc {
        id: "gods-gift-to-women",
        title: "God's Gift to Women",
        body: "God's Gift to Women is a 1931 American pre-Code romantic musical comedy film directed by Michael Curtiz. \
               The film stars Frank Fay and Laura La Plante.",
        entities: &["God's Gift to Women", "1931", "American", "Michael Curtiz", "Frank Fay", "Laura La Plante"],
        triples: &[
            ["God's Gift to Women", "directed by", "Michael Curtiz"],
            ["God's Gift to Women", "is a", "romantic musical comedy film"],
            ["God's Gift to Women", "stars", "Frank Fay"],
        ],
    },
    CaseDoc {
        id: "aldri-annet-enn-brak",
        title: "Aldri annet enn bråk",
        body: "Aldri annet enn bråk is a 1954 Norwegian comedy-drama film directed by Edith Carlmar. \
               The film follows a family living in Oslo.",
        entities: &["Aldri annet enn bråk", "1954", "Norwegian", "Edith Carlmar", "Oslo"],
        triples: &[
            ["Aldri annet enn bråk", "directed by", "Edith Carlmar"],
            ["Aldri annet enn bråk", "is a", "Norwegian comedy-drama film"],
        ],
    },
    CaseDoc {
        id: "dan-milne",
        title: "Dan Milne",
        body: "Dan Milne is a British actor and director who is possibly best known for his role in a long-running television drama.",
        entities: &["Dan Milne", "British"],
        triples: &[["Dan Milne", "is a", "British actor"], ["Dan Milne", "is a", "director"]],
    },
    CaseDoc {
        id: "edith-carlmar",
        title: "Edith Carlmar",
        body: "Edith Carlmar (Edith Mary Johanne Mathiesen) (15 November 1911 - 17 May 2003) was a Norwegian actress and film director. \
               She started Carlmar Film A/S together with her husband Otto Carlmar.",
        entities: &["Edith Carlmar", "Edith Mary Johanne Mathiesen", "15 November 1911", "17 May 2003", "Carlmar Film A/S", "Otto Carlmar"],
        triples: &[
            ["Edith Carlmar", "started", "Carlmar Film A/S"],
            ["Edith Carlmar", "is also known as", "Edith Mary Johanne Mathiesen"],
            ["Edith Carlmar", "born on", "15 November 1911"],
            ["Edith Carlmar", "died on", "17 May 2003"],
        ],
    },
    CaseDoc {
        id: "michael-curtiz",
        title: "Michael Curtiz",
        body: "Michael Curtiz (born Manó Kaminer; December 24, 1886 - April 10, 1962) was a Hungarian-American film director. \
               He directed Casablanca in 1942.",
        entities: &["Michael Curtiz", "Manó Kaminer", "December 24, 1886", "April 10, 1962", "Casablanca"],
        triples: &[
            ["Michael Curtiz", "born on", "December 24, 1886"],
            ["Michael Curtiz", "directed", "Casablanca"],
            ["Michael Curtiz", "is a", "Hungarian-American film director"],
        ],
    },
    CaseDoc {
        id: "casablanca",
        title: "Casablanca (film)",
        body: "Casablanca is a 1942 American romantic drama film. It stars Humphrey Bogart and Ingrid Bergman.",
        entities: &["Casablanca", "1942", "American", "Humphrey Bogart", "Ingrid Bergman"],
        triples: &[["Casablanca", "is a", "1942 American romantic drama film"], ["Casablanca", "stars", "Humphrey Bogart"]],
    },
];

pub fn case_study_documents() -> Vec<Document> {
    CASE_DOCS.iter().map(|d| Document::new(d.id, d.title, d.body)).collect()
}

fn facts_json(rows: &[[&str; 3]]) -> String {
    json!({ "fact": rows }).to_string()
}

/// Replay script covering extraction of every case-study document, both
/// integration rounds and the triple-level reader.
pub fn case_study_script() -> ReplayScript {
    let mut script = ReplayScript::new(Vec::new());
    script.model = "case-study-replay".into();
    for d in CASE_DOCS {
        script.push(
            ReplayRule::new(RoleTag::Ner, json!({ "named entities": d.entities }).to_string())
                .containing(format!("Passage: {}\n", d.title)),
        );
        script.push(
            ReplayRule::new(RoleTag::TripleExtract, json!({ "triples": d.triples }).to_string())
                .containing(format!("Title: {}\n", d.title)),
        );
    }
    let round2 = format!(
        "[[ ## thought ## ]]:\nThe question is: Which film has the director who is older, God's Gift to Women or Aldri Annét Enn Bråk? \
         From the previous step, we identified that Michael Curtiz directed God's Gift to Women and Edith Carlmar directed Aldri Annét Enn Bråk. \
         The current facts provide their birth dates: Michael Curtiz was born on December 24, 1886 and Edith Carlmar was born on November 15, 1911. \
         Since Michael Curtiz is older than Edith Carlmar. Therefore, the film God's Gift to Women has the older director.\n\n\
         [[ ## fact_after_filter ## ]]:\n{}\n\n[[ ## question ## ]]:\n<no question>\n",
        facts_json(&CASE_STUDY_CORE[2..])
    );
    let round1 = format!(
        "[[ ## thought ## ]]:\nThe query asks: Which film has the director who is older, God's Gift to Women or Aldri Annét Enn Bråk? \
         From the facts provided, we know that God's Gift to Women was directed by Michael Curtiz and Aldri Annét Enn Bråk was directed by Edith Carlmar. \
         To determine which director is older, we need their birth years. \
         The next step is to find out the birth years of Michael Curtiz and Edith Carlmar.\n\n\
         [[ ## fact_after_filter ## ]]:\n{}\n\n[[ ## question ## ]]:\n{CASE_STUDY_NEXT_QUERY}\n",
        facts_json(&CASE_STUDY_CORE[..2])
    );
    // the round-2 prompt also satisfies the round-1 rule, so it goes first
    script.push(
        ReplayRule::new(RoleTag::Integrate, round2)
            .containing(format!("[[ ## question ## ]]:\n{CASE_STUDY_NEXT_QUERY}"))
            .required(),
    );
    script.push(ReplayRule::new(RoleTag::Integrate, round1).required());
    script.push(
        ReplayRule::new(
            RoleTag::ReaderTriple,
            "Michael Curtiz (born Dec 24, 1886) is older than Edith Carlmar (born Nov 15, 1911). \
             Therefore, the film with the older director is God'S Gift To Women.\n\nAnswer: God'S Gift To Women",
        )
        .containing("('michael curtiz', 'born on', 'december 24 1886')")
        .required(),
    );
    script
}

// ---------------------------------------------------------------------------
// Synthetic two-hop suite

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SyntheticQuestion {
    pub id: String,
    pub question: String,
    pub person: String,
    pub city: String,
    pub country: String,
}

/// Ground truth of the synthetic world.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SyntheticKb {
    pub born_in: BTreeMap<String, String>,
    pub located_in: BTreeMap<String, String>,
}

impl SyntheticKb {
    /// Country of the person's birthplace.
    pub fn answer(&self, person: &str) -> Option<&str> {
        let city = self.born_in.get(person)?;
        self.located_in.get(city).map(String::as_str)
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticSuite {
    pub documents: Vec<Document>,
    pub questions: Vec<SyntheticQuestion>,
    pub kb: SyntheticKb,
}

const ONSETS: &[&str] = &["b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z"];
const VOWELS: &[&str] = &["a", "e", "i", "o", "u"];
const OCCUPATIONS: &[&str] = &["painter", "engineer", "botanist", "sailor", "judge", "composer", "surveyor", "chemist"];

fn word(rng: &mut ChaCha8Rng, syllables: usize, suffix: &str) -> String {
    let mut w = String::new();
    for _ in 0..syllables {
        w.push_str(ONSETS.choose(rng).unwrap());
        w.push_str(VOWELS.choose(rng).unwrap());
    }
    w.push_str(suffix);
    let mut c = w.chars();
    let first = c.next().unwrap().to_ascii_uppercase();
    std::iter::once(first).chain(c).collect()
}

fn fresh(rng: &mut ChaCha8Rng, used: &mut BTreeSet<String>, syllables: usize, suffix: &str) -> String {
    loop {
        let w = word(rng, syllables, suffix);
        if used.insert(w.to_lowercase()) {
            return w;
        }
    }
}

pub fn synthetic_question(person: &str) -> String {
    format!("Which country is the birthplace of {person} located in?")
}

pub fn synthetic_hop_query(city: &str) -> String {
    format!("Which country is {city} located in?")
}

/// `n` questions over `2n` documents: one birth document per person and one
/// location document per city. Countries are shared between questions.
pub fn synthetic_two_hop(n: usize, seed: u64) -> SyntheticSuite {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut used = BTreeSet::new();
    let countries: Vec<String> = (0..8.min(n.max(1))).map(|_| fresh(&mut rng, &mut used, 2, "ria")).collect();
    let mut kb = SyntheticKb::default();
    let mut documents = Vec::with_capacity(2 * n);
    let mut questions = Vec::with_capacity(n);
    for i in 0..n {
        let person = format!(
            "{} {}",
            fresh(&mut rng, &mut used, 2, ""),
            fresh(&mut rng, &mut used, 3, "")
        );
        let city = fresh(&mut rng, &mut used, 2, "ford");
        let country = countries[rng.gen_range(0..countries.len())].clone();
        let occupation = OCCUPATIONS.choose(&mut rng).unwrap();
        let population = rng.gen_range(2_000..900_000);
        let pbody = format!("{person} was born in {city}. {person} worked as a {occupation} for many years.");
        let cbody = format!("{city} is located in {country}. It has a population of {population}.");
        documents.push(Document::new(paragraph_id(&person, &pbody), person.clone(), pbody));
        documents.push(Document::new(paragraph_id(&city, &cbody), city.clone(), cbody));
        kb.born_in.insert(person.clone(), city.clone());
        kb.located_in.insert(city.clone(), country.clone());
        questions.push(SyntheticQuestion {
            id: format!("syn-{i:03}"),
            question: synthetic_question(&person),
            person,
            city,
            country,
        });
    }
    SyntheticSuite { documents, questions, kb }
}

impl SyntheticSuite {
    /// The suite as an evaluation dataset; both hop documents are supporting.
    pub fn dataset(&self) -> Dataset {
        let mut ds = Dataset::default();
        let by_title: BTreeMap<&str, &Document> = self.documents.iter().map(|d| (d.title.as_str(), d)).collect();
        for q in &self.questions {
            let support = [q.person.as_str(), q.city.as_str()]
                .iter()
                .map(|t| {
                    let d = by_title[t];
                    ds.add_paragraph(&d.title, &d.body)
                })
                .collect();
            ds.examples.push(QAExample {
                id: q.id.clone(),
                question: q.question.clone(),
                gold_answers: vec![q.country.clone()],
                supporting_doc_ids: support,
                distractor_doc_ids: Vec::new(),
            });
        }
        ds
    }
}

fn re(cell: &'static OnceLock<Regex>, pattern: &str) -> &'static Regex {
    cell.get_or_init(|| Regex::new(pattern).unwrap())
}

fn born_re() -> &'static Regex {
    static R: OnceLock<Regex> = OnceLock::new();
    re(&R, r"([A-Z][a-z]+ [A-Z][a-z]+) was born in ([A-Z][a-z]+)\.")
}

fn located_re() -> &'static Regex {
    static R: OnceLock<Regex> = OnceLock::new();
    re(&R, r"([A-Z][a-z]+) is located in ([A-Z][a-z]+)\.")
}

fn triple_re() -> &'static Regex {
    static R: OnceLock<Regex> = OnceLock::new();
    re(&R, r"\('([^']*)', '([^']*)', '([^']*)'\)")
}

fn person_re() -> &'static Regex {
    static R: OnceLock<Regex> = OnceLock::new();
    re(&R, r"birthplace of (.+?) located in")
}

/// Text between the last occurrence of `start` and the following `end`.
fn last_between<'a>(s: &'a str, start: &str, end: &str) -> &'a str {
    let from = s.rfind(start).map_or(0, |i| i + start.len());
    let rest = &s[from..];
    rest.find(end).map_or(rest, |j| &rest[..j])
}

fn oracle_rows(text: &str) -> Vec<[String; 3]> {
    let mut rows = Vec::new();
    for c in born_re().captures_iter(text) {
        rows.push([c[1].to_owned(), "born in".to_owned(), c[2].to_owned()]);
    }
    for c in located_re().captures_iter(text) {
        rows.push([c[1].to_owned(), "located in".to_owned(), c[2].to_owned()]);
    }
    rows
}

/// Normalized facts visible in a reader context, whatever its granularity.
fn context_facts(context: &str) -> Vec<[String; 3]> {
    let mut facts: Vec<[String; 3]> = triple_re()
        .captures_iter(context)
        .map(|c| [c[1].to_owned(), c[2].to_owned(), c[3].to_owned()])
        .collect();
    facts.extend(
        oracle_rows(context)
            .into_iter()
            .map(|[s, r, o]| [normalize_text(&s), r, normalize_text(&o)]),
    );
    facts
}

fn lookup<'a>(facts: &'a [[String; 3]], subject: &str, relation: &str) -> Option<&'a str> {
    facts
        .iter()
        .find(|f| f[0] == subject && f[1] == relation)
        .map(|f| f[2].as_str())
}

/// Fact blocks of an integration prompt after its instruction:
/// `(marker, rows)` in prompt order.
fn prompt_fact_blocks(prompt: &str) -> Vec<(&'static str, Vec<[String; 3]>)> {
    let body = prompt.find("i-th Inputs:").map_or(prompt, |i| &prompt[i..]);
    let mut blocks = Vec::new();
    let mut pos = 0;
    loop {
        let before = body[pos..].find(MARK_FACT_BEFORE).map(|i| (i, MARK_FACT_BEFORE));
        let after = body[pos..].find(MARK_FACT_AFTER).map(|i| (i, MARK_FACT_AFTER));
        let Some((i, mark)) = [before, after].into_iter().flatten().min_by_key(|(i, _)| *i) else {
            break;
        };
        let start = pos + i + mark.len();
        let json_start = body[start..].find('{').map(|j| start + j);
        let json_end = body[start..].find("]}").map(|j| start + j + 2);
        if let (Some(a), Some(b)) = (json_start, json_end) {
            let rows = serde_json::from_str::<serde_json::Value>(&body[a..b])
                .ok()
                .and_then(|v| v.get("fact").cloned())
                .and_then(|v| serde_json::from_value::<Vec<[String; 3]>>(v).ok())
                .unwrap_or_default();
            blocks.push((mark, rows));
            pos = b;
        } else {
            pos = start;
        }
    }
    blocks
}

struct Display {
    names: BTreeMap<String, String>,
}

impl Display {
    fn of(&self, normalized: &str) -> String {
        self.names.get(normalized).cloned().unwrap_or_else(|| normalized.to_owned())
    }
}

fn integrate(prompt: &str, names: &Display) -> String {
    let query_line = last_between(prompt, &format!("{MARK_QUERY}: "), "\n");
    let person = person_re()
        .captures(query_line)
        .map(|c| normalize_text(&c[1]))
        .unwrap_or_default();
    let blocks = prompt_fact_blocks(prompt);
    let latest: Vec<[String; 3]> = blocks
        .iter()
        .rev()
        .find(|(m, _)| *m == MARK_FACT_BEFORE)
        .map(|(_, r)| r.clone())
        .unwrap_or_default();
    let kept: Vec<[String; 3]> = blocks
        .iter()
        .filter(|(m, _)| *m == MARK_FACT_AFTER)
        .flat_map(|(_, r)| r.iter().cloned())
        .collect();

    let tr = |f: &[String; 3]| Triple::new(&f[0], &f[1], &f[2], "", None).expect("non-empty fact");
    let find = |rows: &[[String; 3]], s: &str, r: &str| rows.iter().find(|f| f[0] == s && f[1] == r).cloned();

    let mut core = Vec::new();
    let mut next_query = None;
    let rationale;
    let city = lookup(&kept, &person, "born in").map(str::to_owned);
    match city {
        None => match find(&latest, &person, "born in") {
            Some(born) => {
                let city = born[2].clone();
                core.push(tr(&born));
                if let Some(loc) = find(&latest, &city, "located in") {
                    rationale = format!("{} was born in {}, which is located in {}.", names.of(&person), names.of(&city), names.of(&loc[2]));
                    core.push(tr(&loc));
                } else {
                    rationale = format!("{} was born in {}. The country of {} is still unknown.", names.of(&person), names.of(&city), names.of(&city));
                    next_query = Some(synthetic_hop_query(&names.of(&city)));
                }
            }
            None => rationale = "None of the facts mention the birthplace.".to_owned(),
        },
        Some(city) => match find(&latest, &city, "located in") {
            Some(loc) => {
                rationale = format!("{} is located in {}.", names.of(&city), names.of(&loc[2]));
                core.push(tr(&loc));
            }
            None => rationale = format!("No facts locate {}.", names.of(&city)),
        },
    }
    render_decision(&IntegrationDecision {
        rationale,
        core_triples: core,
        next_query,
    })
}

fn read(prompt: &str, forced: bool, names: &Display) -> String {
    let query = last_between(prompt, "\n\nQuery: ", "\n\nOutputs:");
    let context = {
        let start = prompt.rfind("Inputs:").unwrap_or(0);
        let end = prompt.rfind("\n\nQuery: ").unwrap_or(prompt.len());
        &prompt[start..end.max(start)]
    };
    let person = person_re()
        .captures(query)
        .map(|c| normalize_text(&c[1]))
        .unwrap_or_default();
    let facts = context_facts(context);
    let answer = lookup(&facts, &person, "born in").and_then(|city| lookup(&facts, city, "located in").map(|k| (city, k)));
    match answer {
        Some((city, country)) => format!(
            "{} was born in {}, and {} is located in {}.\n\nAnswer: {}.",
            names.of(&person),
            names.of(city),
            names.of(city),
            names.of(country),
            names.of(country)
        ),
        None if forced => "The context does not settle it; giving a best guess.\n\nAnswer: unknown".to_owned(),
        None => "The context does not connect the person to a country.\n\nAnswer: Unanswerable".to_owned(),
    }
}

fn extract_entities_reply(prompt: &str) -> String {
    static R: OnceLock<Regex> = OnceLock::new();
    let passage = last_between(prompt, "Passage: ", "\n\nOutputs:");
    let caps = re(&R, r"[A-Z][a-z]+(?: [A-Z][a-z]+)*");
    let mut seen = Vec::new();
    for m in caps.find_iter(passage) {
        if !seen.contains(&m.as_str()) {
            seen.push(m.as_str());
        }
    }
    json!({ "named entities": seen }).to_string()
}

fn extract_triples_reply(prompt: &str) -> String {
    let text = last_between(prompt, "\nText: ", "\n\nEntity lists:");
    json!({ "triples": oracle_rows(text) }).to_string()
}

/// Rule-based stand-in for every model role over the synthetic world.
///
/// Extraction reads the two sentence patterns, the integrator keeps the
/// birth fact and asks for the birthplace's country, and the reader chains
/// whatever facts its context shows.
pub fn synthetic_oracle(kb: &SyntheticKb) -> OracleBackend {
    let mut names = BTreeMap::new();
    for (p, c) in &kb.born_in {
        names.insert(normalize_text(p), p.clone());
        names.insert(normalize_text(c), c.clone());
    }
    for (c, k) in &kb.located_in {
        names.insert(normalize_text(c), c.clone());
        names.insert(normalize_text(k), k.clone());
    }
    let names = Display { names };
    OracleBackend::new("synthetic-oracle", move |req: &CompletionRequest| {
        Ok(match req.role_tag {
            RoleTag::Ner => extract_entities_reply(&req.prompt),
            RoleTag::TripleExtract => extract_triples_reply(&req.prompt),
            RoleTag::Integrate => integrate(&req.prompt, &names),
            RoleTag::ReaderDefault => read(&req.prompt, true, &names),
            RoleTag::ReaderTriple | RoleTag::ReaderSentence | RoleTag::ReaderPassage => read(&req.prompt, false, &names),
        })
    })
}

// ---------------------------------------------------------------------------
// HTTP stub

/// Recovers the role of a prompt built from the bundled templates. Used to
/// serve role-aware oracles behind a plain chat endpoint.
pub fn infer_role(prompt: &str) -> RoleTag {
    let inputs = prompt.rfind("Inputs:").map_or("", |i| &prompt[i..]);
    if prompt.starts_with("Instruction: Your task is to extract named entities") {
        RoleTag::Ner
    } else if prompt.starts_with("Instruction: Your task is to construct an RDF") {
        RoleTag::TripleExtract
    } else if prompt.contains("[[ ## historical_context ## ]]:") {
        RoleTag::Integrate
    } else if inputs.contains("\nTriples: ") {
        RoleTag::ReaderTriple
    } else if inputs.contains("\nSentences: ") {
        RoleTag::ReaderSentence
    } else if prompt.contains("output Unanswerable") {
        RoleTag::ReaderPassage
    } else {
        RoleTag::ReaderDefault
    }
}

/// Stub handler answering chat completions with `backend`, after `delay`.
pub fn oracle_stub_handler(
    backend: Arc<dyn crate::llm::LlmBackend>,
    delay: Duration,
) -> impl Fn(&StubRequest) -> StubReply + Send + Sync + 'static {
    move |req: &StubRequest| {
        let prompt = serde_json::from_str::<serde_json::Value>(&req.body)
            .ok()
            .and_then(|v| v["messages"][0]["content"].as_str().map(str::to_owned))
            .unwrap_or_default();
        let request = CompletionRequest::new(infer_role(&prompt), prompt);
        match backend.complete(&request) {
            Ok(out) => StubReply::ok(chat_completion_body(&out.text)).after(delay),
            Err(e) => StubReply {
                status: 500,
                body: json!({ "error": { "message": e.to_string() } }).to_string(),
                delay,
            },
        }
    }
}

#[derive(Debug, Clone)]
pub struct StubRequest {
    /// 0-based arrival index.
    pub index: usize,
    pub method: String,
    pub path: String,
    pub body: String,
}

#[derive(Debug, Clone)]
pub struct StubReply {
    pub status: u16,
    pub body: String,
    pub delay: Duration,
}

impl StubReply {
    pub fn ok(body: impl Into<String>) -> Self {
        Self {
            status: 200,
            body: body.into(),
            delay: Duration::ZERO,
        }
    }

    pub fn status(status: u16) -> Self {
        Self {
            status,
            body: json!({ "error": { "message": "stub" } }).to_string(),
            delay: Duration::ZERO,
        }
    }

    pub fn after(mut self, delay: Duration) -> Self {
        self.delay = delay;
        self
    }
}

/// Body of an OpenAI-style chat completion.
pub fn chat_completion_body(content: &str) -> String {
    json!({
        "id": "stub",
        "object": "chat.completion",
        "model": "stub-model",
        "choices": [{ "index": 0, "message": { "role": "assistant", "content": content }, "finish_reason": "stop" }],
        "usage": { "prompt_tokens": 1, "completion_tokens": 1, "total_tokens": 2 }
    })
    .to_string()
}

#[derive(Debug, Default)]
struct StubStats {
    requests: AtomicUsize,
    in_flight: AtomicUsize,
    peak: AtomicUsize,
}

type StubHandler = dyn Fn(&StubRequest) -> StubReply + Send + Sync;

/// Minimal HTTP/1.1 server on a loopback port, one thread per connection.
pub struct StubServer {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    stats: Arc<StubStats>,
    accept: Option<JoinHandle<()>>,
}

impl StubServer {
    pub fn start(handler: impl Fn(&StubRequest) -> StubReply + Send + Sync + 'static) -> std::io::Result<Self> {
        let listener = TcpListener::bind("127.0.0.1:0")?;
        let addr = listener.local_addr()?;
        let stop = Arc::new(AtomicBool::new(false));
        let stats = Arc::new(StubStats::default());
        let handler: Arc<StubHandler> = Arc::new(handler);
        let accept = {
            let stop = stop.clone();
            let stats = stats.clone();
            std::thread::spawn(move || {
                for conn in listener.incoming() {
                    if stop.load(Ordering::SeqCst) {
                        break;
                    }
                    let Ok(conn) = conn else { continue };
                    let handler = handler.clone();
                    let stats = stats.clone();
                    std::thread::spawn(move || {
                        if let Err(e) = serve(conn, handler.as_ref(), &stats) {
                            log::debug!("stub connection error: {e}");
                        }
                    });
                }
            })
        };
        Ok(Self {
            addr,
            stop,
            stats,
            accept: Some(accept),
        })
    }

    /// Base URL including the `/v1` prefix.
    pub fn endpoint(&self) -> String {
        format!("http://{}/v1", self.addr)
    }

    pub fn requests(&self) -> usize {
        self.stats.requests.load(Ordering::SeqCst)
    }

    /// Highest number of requests handled at the same time.
    pub fn peak_concurrency(&self) -> usize {
        self.stats.peak.load(Ordering::SeqCst)
    }
}

impl Drop for StubServer {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        let _ = TcpStream::connect(self.addr);
        if let Some(h) = self.accept.take() {
            let _ = h.join();
        }
    }
}

fn serve(conn: TcpStream, handler: &StubHandler, stats: &StubStats) -> std::io::Result<()> {
    let mut reader = BufReader::new(conn.try_clone()?);
    let mut request_line = String::new();
    if reader.read_line(&mut request_line)? == 0 {
        return Ok(());
    }
    let mut parts = request_line.split_whitespace();
    let method = parts.next().unwrap_or_default().to_owned();
    let path = parts.next().unwrap_or_default().to_owned();
    let mut content_length = 0usize;
    loop {
        let mut line = String::new();
        if reader.read_line(&mut line)? == 0 || line == "\r\n" || line == "\n" {
            break;
        }
        if let Some((k, v)) = line.split_once(':') {
            if k.trim().eq_ignore_ascii_case("content-length") {
                content_length = v.trim().parse().unwrap_or(0);
            }
        }
    }
    let mut body = vec![0u8; content_length];
    reader.read_exact(&mut body)?;

    let index = stats.requests.fetch_add(1, Ordering::SeqCst);
    let now = stats.in_flight.fetch_add(1, Ordering::SeqCst) + 1;
    stats.peak.fetch_max(now, Ordering::SeqCst);
    let req = StubRequest {
        index,
        method,
        path,
        body: String::from_utf8_lossy(&body).into_owned(),
    };
    let reply = handler(&req);
    std::thread::sleep(reply.delay);
    stats.in_flight.fetch_sub(1, Ordering::SeqCst);

    let mut out = conn;
    write!(
        out,
        "HTTP/1.1 {} Stub\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{}",
        reply.status,
        reply.body.len(),
        reply.body
    )?;
    out.flush()
}
