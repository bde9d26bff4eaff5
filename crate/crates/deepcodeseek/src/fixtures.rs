//! Bundled synthetic fixtures: a metadata snapshot sized like the production
//! catalog, a 30-namespace toy benchmark, and triplet pools for the cleaning
//! and mining stages. Everything is generated deterministically so tests and
//! demos never depend on external data.

use serde_json::Map;

use crate::corpus::{CompletionTask, Intent, MethodRecord, ScriptIncludeRecord};
use crate::datagen::{SyntheticTriplet, TripletSource};
use crate::embed::MockEmbedder;

fn record(
    namespace: &str,
    scope: &str,
    package: &str,
    jsdoc: Option<&str>,
    methods: Vec<MethodRecord>,
) -> ScriptIncludeRecord {
    let mut rec = ScriptIncludeRecord {
        namespace: namespace.to_string(),
        scope: scope.to_string(),
        package: package.to_string(),
        methods,
        raw_code: format!("var {namespace} = Class.create();"),
        jsdoc_summary: jsdoc.map(str::to_string),
        is_global: false,
        raw_token_count: 0,
        jsdoc_token_count: 0,
        extra: Map::new(),
    };
    rec.finalize(crate::corpus::DEFAULT_GLOBAL_SCOPE);
    rec
}

fn method(name: &str, signature: &str, jsdoc: &str) -> MethodRecord {
    MethodRecord {
        name: name.to_string(),
        signature: signature.to_string(),
        jsdoc: Some(jsdoc.to_string()),
        extra: Map::new(),
    }
}

/// Number of global namespaces in the metadata snapshot.
pub const KG_GLOBAL_COUNT: usize = 2_516;
/// Number of non-global namespaces in the metadata snapshot.
pub const KG_NON_GLOBAL_COUNT: usize = 1_744;
/// Non-global namespaces planted with a second (package, scope) edge, chosen
/// so the one-to-one fraction lands at 1692/1744 ≈ 97.0%.
pub const KG_MULTI_EDGE_COUNT: usize = 52;

/// Metadata snapshot for knowledge-graph arithmetic: 2,516 global plus 1,744
/// non-global namespaces, of which 52 are reachable from two (package, scope)
/// pairs. Records sharing a namespace differ only in package/scope, so feed
/// this to `build_graph` directly rather than through the JSONL loader.
pub fn kg_fixture_records() -> Vec<ScriptIncludeRecord> {
    let mut records = Vec::with_capacity(KG_GLOBAL_COUNT + KG_NON_GLOBAL_COUNT + KG_MULTI_EDGE_COUNT);
    for i in 0..KG_GLOBAL_COUNT {
        records.push(record(
            &format!("GlobalNs{i:04}"),
            "global",
            "core_platform",
            None,
            Vec::new(),
        ));
    }
    for i in 0..KG_NON_GLOBAL_COUNT {
        let ns = format!("ScopedNs{i:04}");
        records.push(record(
            &ns,
            &format!("x_scope_{i:04}"),
            &format!("app_pkg_{i:04}"),
            None,
            Vec::new(),
        ));
        if i < KG_MULTI_EDGE_COUNT {
            records.push(record(
                &ns,
                &format!("x_alt_{i:04}"),
                &format!("alt_pkg_{i:04}"),
                None,
                Vec::new(),
            ));
        }
    }
    records
}

/// (namespace, scope, jsdoc summary, method name, method signature, method jsdoc)
const TOY_NAMESPACES: &[(&str, &str, &str, &str, &str, &str)] = &[
    (
        "ArrayUtil",
        "global",
        "Utility api for arrays: compute the difference union and intersect of two arrays, check whether an array contains an element.",
        "diff",
        "diff(first, second)",
        "Returns elements present in the first array but absent from the second.",
    ),
    (
        "Differ",
        "global",
        "Computes a textual diff between two versions of a string, line by line.",
        "diff",
        "diff(oldText, newText)",
        "Returns line ranges that changed between the versions.",
    ),
    (
        "LiveFeedCommon",
        "global",
        "Live feed conversation helper for posting messages and mentions to activity feeds.",
        "postMessage",
        "postMessage(feed, message)",
        "Posts a message to the given live feed conversation.",
    ),
    (
        "XMLDocument",
        "global",
        "Parse xml markup into a document tree and mutate nodes and attributes.",
        "getNode",
        "getNode(xpath)",
        "Returns the first xml node matching the xpath expression.",
    ),
    (
        "OCGroup",
        "global",
        "On call rotation roster lookup for support groups and escalation schedules.",
        "getRoster",
        "getRoster(groupId)",
        "Returns the on call roster for a rotation group.",
    ),
    (
        "DateTimeUtils",
        "global",
        "Convert timestamps between timezones and format durations for display.",
        "format",
        "format(timestamp, pattern)",
        "Formats a timestamp using the supplied pattern.",
    ),
    (
        "JsonStreamParser",
        "global",
        "Incrementally parse json payloads from a stream without buffering.",
        "next",
        "next()",
        "Returns the next parsed json value from the stream.",
    ),
    (
        "EmailOutbound",
        "global",
        "Compose and send outbound email notifications with templates and attachments.",
        "send",
        "send(recipient, template)",
        "Sends a templated email notification to the recipient.",
    ),
    (
        "CurrencyConverter",
        "global",
        "Convert monetary amounts between currencies using daily exchange rates.",
        "convert",
        "convert(amount, fromCode, toCode)",
        "Converts an amount from one currency code to another.",
    ),
    (
        "AttachmentStore",
        "global",
        "Store and fetch binary file attachments linked to records.",
        "fetch",
        "fetch(attachmentId)",
        "Fetches the binary payload for an attachment id.",
    ),
    (
        "SlaCalculator",
        "global",
        "Compute breach deadlines and elapsed percentages for service level agreements.",
        "breachTime",
        "breachTime(taskId)",
        "Returns the projected breach deadline for a task.",
    ),
    (
        "UserLookup",
        "global",
        "Resolve user profiles by login name, email address or employee number.",
        "byEmail",
        "byEmail(address)",
        "Resolves the user profile owning an email address.",
    ),
    (
        "GroupMembership",
        "global",
        "Enumerate membership of assignment groups and nested subgroups.",
        "members",
        "members(groupId)",
        "Lists direct and nested members of a group.",
    ),
    (
        "ScheduleWindow",
        "global",
        "Evaluate maintenance windows and blackout schedules for change planning.",
        "isOpen",
        "isOpen(scheduleId, moment)",
        "True when the schedule window is open at the moment.",
    ),
    (
        "GeoDistance",
        "global",
        "Great circle distance between latitude longitude coordinates.",
        "between",
        "between(a, b)",
        "Returns the distance in kilometers between two coordinates.",
    ),
    (
        "PasswordPolicy",
        "global",
        "Validate password strength against complexity and rotation policy.",
        "check",
        "check(candidate)",
        "Validates a candidate password against the policy.",
    ),
    (
        "AuditTrail",
        "global",
        "Record immutable audit entries for sensitive field changes.",
        "log",
        "log(record, field, oldValue, newValue)",
        "Appends an audit entry for a field change.",
    ),
    (
        "RateLimiter",
        "global",
        "Token bucket throttling for outbound integration calls.",
        "acquire",
        "acquire(bucket)",
        "Blocks until a throttle token is available.",
    ),
    (
        "HtmlSanitizer",
        "global",
        "Strip unsafe markup and scripts from rich text before rendering.",
        "sanitize",
        "sanitize(html)",
        "Returns the html with unsafe elements removed.",
    ),
    (
        "CsvExporter",
        "global",
        "Serialize query results into csv spreadsheets with quoting and headers.",
        "export",
        "export(rows)",
        "Serializes rows into a quoted csv string.",
    ),
    (
        "BarcodeGenerator",
        "global",
        "Render barcode and qr images for asset labels.",
        "qr",
        "qr(payload)",
        "Renders a qr image encoding the payload.",
    ),
    (
        "TranslationLoader",
        "global",
        "Load localized message bundles and interpolate placeholders.",
        "message",
        "message(key, locale)",
        "Returns the localized message for a key.",
    ),
    (
        "QueueDispatcher",
        "global",
        "Dispatch background jobs onto priority queues with retry backoff.",
        "enqueue",
        "enqueue(job, priority)",
        "Enqueues a background job at the given priority.",
    ),
    (
        "MetricRollup",
        "global",
        "Aggregate time series metrics into hourly and daily rollups.",
        "hourly",
        "hourly(metric)",
        "Returns hourly aggregates for a metric.",
    ),
    (
        "TemplateRenderer",
        "global",
        "Render mustache style templates with nested variable substitution.",
        "render",
        "render(template, vars)",
        "Renders a template with the supplied variables.",
    ),
    (
        "IpAddressUtil",
        "x_netops",
        "Parse subnets, match cidr ranges and normalize ip addresses.",
        "inRange",
        "inRange(address, cidr)",
        "True when the address falls inside the cidr range.",
    ),
    (
        "LdapSync",
        "x_netops",
        "Synchronize directory entries from ldap into local tables.",
        "sync",
        "sync(ou)",
        "Synchronizes one ldap organizational unit.",
    ),
    (
        "FirmwareCatalog",
        "x_netops",
        "Track firmware versions and advisories for network devices.",
        "latest",
        "latest(model)",
        "Returns the latest firmware entry for a device model.",
    ),
    (
        "InvoiceMatcher",
        "x_finance",
        "Match supplier invoices against purchase orders and receipts.",
        "match",
        "match(invoiceId)",
        "Matches an invoice to its purchase order lines.",
    ),
    (
        "BudgetForecast",
        "x_finance",
        "Forecast budget consumption from historical spend trends.",
        "project",
        "project(costCenter)",
        "Projects spend for a cost center to year end.",
    ),
];

/// First few content words of a jsdoc summary, used to compose task code that
/// overlaps the target document without naming the namespace.
fn keywords(jsdoc: &str) -> Vec<&str> {
    jsdoc
        .split(|c: char| !c.is_alphanumeric())
        .filter(|w| w.len() > 3)
        .take(8)
        .collect()
}

/// 30-namespace corpus plus 60 completion tasks (one clear, one ambiguous per
/// namespace). Task code borrows vocabulary from the target's jsdoc summary
/// but never names the namespace, so retrieval is non-trivial yet solvable by
/// token overlap.
pub fn toy_benchmark() -> (Vec<ScriptIncludeRecord>, Vec<CompletionTask>) {
    let corpus: Vec<ScriptIncludeRecord> = TOY_NAMESPACES
        .iter()
        .map(|(ns, scope, jsdoc, m_name, m_sig, m_doc)| {
            let package = match *scope {
                "global" => "core_platform",
                other => other,
            };
            record(ns, scope, package, Some(jsdoc), vec![method(m_name, m_sig, m_doc)])
        })
        .collect();

    let mut tasks = Vec::new();
    for (ns, _, jsdoc, m_name, _, _) in TOY_NAMESPACES {
        let words = keywords(jsdoc);
        let slug = crate::tokenize::tokenize(ns).join("-");
        tasks.push(CompletionTask {
            id: format!("{slug}-clear"),
            code_before: format!("// need to {}\nvar result = ", words.join(" ")),
            code_middle: format!("new {ns}().{m_name}(input)"),
            code_after: Some("gs.info(result);\nreturn result;".to_string()),
            ground_truth: ns.to_string(),
            intent: Intent::Clear,
            extra: Map::new(),
        });
        tasks.push(CompletionTask {
            id: format!("{slug}-vague"),
            code_before: format!(
                "var value = current.getValue('payload');\n// helper for {}\nvar out = ",
                words[0]
            ),
            code_middle: format!("new {ns}()"),
            code_after: None,
            ground_truth: ns.to_string(),
            intent: Intent::Ambiguous,
            extra: Map::new(),
        });
    }
    (corpus, tasks)
}

/// Number of triplets in the decontamination pool.
pub const DECON_TOTAL: usize = 200;
/// Triplets planted with a whole-identifier leak of the target.
pub const DECON_LEAKS: usize = 30;
/// Near-duplicate clusters planted in the pool.
pub const DECON_DUP_CLUSTERS: usize = 10;
/// Members per planted duplicate cluster.
pub const DECON_DUP_SIZE: usize = 3;

/// 200-triplet pool: 140 unique clean samples, 10 near-duplicate clusters of
/// 3 (pairwise token-set similarity above 0.9), and 30 samples leaking their
/// target into code_before. Cleaning should keep 150.
pub fn decontamination_fixture() -> Vec<SyntheticTriplet> {
    let mut triplets = Vec::with_capacity(DECON_TOTAL);
    let unique = DECON_TOTAL - DECON_LEAKS - DECON_DUP_CLUSTERS * DECON_DUP_SIZE;
    for i in 0..unique {
        triplets.push(SyntheticTriplet {
            id: format!("uniq-{i:03}"),
            code_before: format!(
                "var payload{i} = source{i}.fetch{i}();\nvalidate{i}(payload{i});\nvar answer = "
            ),
            code_middle: format!("transform{i}(payload{i})"),
            code_after: format!("store{i}.save(answer);"),
            target: format!("CleanTarget{i}"),
            source: TripletSource::LlmGenerated,
        });
    }
    for c in 0..DECON_DUP_CLUSTERS {
        // 28 shared tokens per cluster, one member-specific token: pairwise
        // similarity 28/30 ≈ 0.93.
        let shared: Vec<String> = (0..28).map(|k| format!("c{c:02}tok{k:02}")).collect();
        for m in 0..DECON_DUP_SIZE {
            triplets.push(SyntheticTriplet {
                id: format!("dup-{c:02}-{m}"),
                code_before: format!("{} member{c:02}v{m}", shared.join(" ")),
                code_middle: "body".to_string(),
                code_after: String::new(),
                target: format!("DupTarget{c}"),
                source: TripletSource::LlmGenerated,
            });
        }
    }
    for i in 0..DECON_LEAKS {
        triplets.push(SyntheticTriplet {
            id: format!("leak-{i:02}"),
            code_before: format!("var helper{i} = new LeakTarget{i}();\nhelper{i}.prepare();"),
            code_middle: format!("helper{i}.finish()"),
            code_after: String::new(),
            target: format!("LeakTarget{i}"),
            source: TripletSource::LlmGenerated,
        });
    }
    triplets
}

/// Triplets in the mining pool that survive hard-negative mining.
pub const MINING_KEPT: usize = 204;
/// Triplets whose positive falls outside the retrieval window.
pub const MINING_DISCARDED: usize = 81;

/// Embedder the mining fixture is calibrated against. The wide dimension
/// keeps token hash collisions from disturbing the engineered score gaps.
pub fn mining_embedder() -> MockEmbedder {
    MockEmbedder::new(4096)
}

/// Corpus plus 285 triplets calibrated so that, under the default mining
/// config and `mining_embedder`, exactly 204 survive and 81 are discarded
/// because their positive is not retrieved within the rank window.
pub fn mining_fixture() -> (Vec<ScriptIncludeRecord>, Vec<SyntheticTriplet>) {
    let mut corpus = vec![record(
        "MinePositive",
        "global",
        "core_platform",
        Some("anchor signal"),
        Vec::new(),
    )];
    for j in 0..40 {
        corpus.push(record(
            &format!("FillerNs{j:02}"),
            "global",
            "core_platform",
            Some(&format!("common noise slot{j:02}")),
            Vec::new(),
        ));
    }

    let mut triplets = Vec::with_capacity(MINING_KEPT + MINING_DISCARDED);
    for i in 0..MINING_KEPT {
        triplets.push(SyntheticTriplet {
            id: format!("mine-good-{i:03}"),
            // overlaps the positive on two tokens and every filler on one
            code_before: "anchor signal common".to_string(),
            code_middle: "stub".to_string(),
            code_after: String::new(),
            target: "MinePositive".to_string(),
            source: TripletSource::LlmGenerated,
        });
    }
    for i in 0..MINING_DISCARDED {
        triplets.push(SyntheticTriplet {
            id: format!("mine-bad-{i:02}"),
            // overlaps only the 40 fillers, pushing the positive past rank 30
            code_before: "common".to_string(),
            code_middle: "stub".to_string(),
            code_after: String::new(),
            target: "MinePositive".to_string(),
            source: TripletSource::LlmGenerated,
        });
    }
    (corpus, triplets)
}

/// Serialize tasks as JSONL for feeding the CLI.
pub fn tasks_to_jsonl(tasks: &[CompletionTask]) -> String {
    let mut out = String::new();
    for t in tasks {
        out.push_str(&serde_json::to_string(t).expect("task serializes"));
        out.push('\n');
    }
    out
}

/// Serialize triplets as JSONL for feeding the CLI.
pub fn triplets_to_jsonl(triplets: &[SyntheticTriplet]) -> String {
    let mut out = String::new();
    for t in triplets {
        out.push_str(&serde_json::to_string(t).expect("triplet serializes"));
        out.push('\n');
    }
    out
}
