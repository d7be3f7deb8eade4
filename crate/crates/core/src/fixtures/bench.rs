//! Generator for the three-site admin benchmark (`fixtures/bench-world.json`
//! and `fixtures/bench-rules.json`).
//!
//! Every site has a root with Help and About links and six sections; each
//! section lists five data pages holding four rows and a link to a view
//! sorted by one metric. Tasks carry a `#NNN` reference the rule table keys
//! on. Task kinds, by what the keyword agent does without memory:
//!
//! * `Direct`: the query names section and page; solved in three steps.
//! * `Detour`: the query also says "help", which sends the agent through
//!   the help page first; solved in five steps.
//! * `Misled`: the query names the wrong section; the agent answers from
//!   that section's first page. Its target is visited by another task.
//! * `Sorted`: reaches the right page but answers before sorting.
//! * `MisledSorted`: both of the above.
//! * `Unseen`: misled towards a target no exploration episode visits.

use std::collections::{BTreeMap, BTreeSet};

use serde_json::{json, Value};

use crate::env::{Affordance, PageSpec, SiteFile, TaskFile, ValidatorFile, ValidatorKind, WorldFile, WORLD_SCHEMA};
use crate::model::{ActionKind, Element, Query};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum TaskKind {
    Direct,
    Detour,
    Misled,
    Sorted,
    MisledSorted,
    Unseen,
}

impl TaskKind {
    pub fn needs_sort(self) -> bool {
        matches!(self, TaskKind::Sorted | TaskKind::MisledSorted)
    }
}

struct SiteDef {
    id: &'static str,
    title: &'static str,
    /// (section, metric, data pages)
    sections: [(&'static str, &'static str, [&'static str; 5]); 6],
    tasks: &'static [(TaskKind, &'static str, &'static str)],
}

use TaskKind::*;

const SITES: [SiteDef; 3] = [
    SiteDef {
        id: "shop-admin",
        title: "Shop Admin",
        sections: [
            ("Sales", "amount", ["Orders", "Invoices", "Shipments", "Refunds", "Transactions"]),
            ("Catalog", "rating", ["Products", "Categories", "Attributes", "Reviews", "Inventory"]),
            ("Customers", "spend", ["Accounts", "Segments", "Groups", "Carts", "Wishlists"]),
            ("Marketing", "uses", ["Promotions", "Coupons", "Newsletters", "Campaigns", "Banners"]),
            ("Reports", "hits", ["Search Terms", "Bestsellers", "Views", "Taxes", "Abandoned"]),
            ("Stores", "volume", ["Locations", "Currencies", "Staff", "Warehouses", "Suppliers"]),
        ],
        tasks: &[
            (Direct, "/sales/orders", "Who placed the latest of our sales orders? (#101)"),
            (Direct, "/catalog/reviews", "Latest catalog reviews: who wrote it? (#102)"),
            (Detour, "/customers/accounts", "Help me find the newest customers accounts signup (#103)"),
            (Detour, "/stores/staff", "Need help: newest stores staff member (#104)"),
            (Sorted, "/reports/search-terms", "Top reports search terms by hits (#105)"),
            (Sorted, "/sales/refunds", "Largest sales refunds amount (#106)"),
            (Sorted, "/marketing/coupons", "Most used marketing coupons (#107)"),
            (Misled, "/sales/orders", "Marketing wants to know the newest buyer (#108)"),
            (Misled, "/marketing/promotions", "Stores team: which promo launched last? (#109)"),
            (Misled, "/stores/locations", "Catalog question: newest shop branch opened (#110)"),
            (Misled, "/catalog/products", "Customers keep asking for our latest item (#111)"),
            (MisledSorted, "/customers/accounts", "Sales asks: biggest spender so far? (#112)"),
            (Unseen, "/reports/views", "Stores: which product page got most views (#113)"),
            (Unseen, "/stores/suppliers", "Catalog team: cheapest vendor on file (#114)"),
        ],
    },
    SiteDef {
        id: "forum",
        title: "Forum",
        sections: [
            ("Threads", "replies", ["Announcements", "Questions", "Showcase", "Bugs", "Ideas"]),
            ("Members", "posts", ["Moderators", "Newcomers", "Banned", "Veterans", "Donors"]),
            ("Boards", "activity", ["General", "Offtopic", "Support", "Feedback", "Archive"]),
            ("Messages", "size", ["Inbox", "Sent", "Drafts", "Flagged", "Spam"]),
            ("Events", "attendance", ["Meetups", "Webinars", "Contests", "Streams", "Polls"]),
            ("Wiki", "edits", ["Guides", "Faq", "Glossary", "Rules", "Changelog"]),
        ],
        tasks: &[
            (Direct, "/threads/announcements", "Latest threads announcements headline (#201)"),
            (Direct, "/events/meetups", "Next events meetups organizer (#202)"),
            (Detour, "/members/moderators", "Help: newest members moderators name (#203)"),
            (Sorted, "/threads/bugs", "Threads bugs with most replies (#204)"),
            (Sorted, "/wiki/guides", "Most edited wiki guides (#205)"),
            (Sorted, "/messages/flagged", "Largest flagged messages (#206)"),
            (Misled, "/threads/announcements", "Boards admins: newest site news post (#207)"),
            (Misled, "/boards/general", "Wiki editors: latest chat topic (#208)"),
            (Misled, "/wiki/guides", "Events crew wants the newest how-to article (#209)"),
            (Misled, "/events/meetups", "Members asked: next in-person gathering host (#210)"),
            (MisledSorted, "/members/moderators", "Threads: busiest moderator (#211)"),
            (Unseen, "/events/polls", "Messages team wants to know which vote drew the biggest crowd (#212)"),
            (Unseen, "/boards/archive", "Wiki: oldest retired discussion (#213)"),
        ],
    },
    SiteDef {
        id: "code-host",
        title: "Code Host",
        sections: [
            ("Repositories", "stars", ["Public", "Private", "Forks", "Templates", "Archived"]),
            ("Issues", "comments", ["Open", "Closed", "Assigned", "Labels", "Milestones"]),
            ("Pulls", "changes", ["Review", "Merged", "Drafts", "Conflicts", "Stale"]),
            ("Actions", "duration", ["Workflows", "Runners", "Caches", "Secrets", "Artifacts"]),
            ("Packages", "downloads", ["Containers", "Npm", "Crates", "Wheels", "Gems"]),
            ("Insights", "count", ["Contributors", "Traffic", "Commits", "Dependents", "Network"]),
        ],
        tasks: &[
            (Direct, "/repositories/public", "Newest public repositories owner (#301)"),
            (Direct, "/issues/closed", "Last closed issues reporter (#302)"),
            (Detour, "/pulls/merged", "Help with latest merged pulls author (#303)"),
            (Sorted, "/packages/crates", "Packages crates with the highest downloads (#304)"),
            (Sorted, "/insights/contributors", "Top insights contributors (#305)"),
            (Misled, "/repositories/public", "Actions team: newest open source project (#306)"),
            (Misled, "/actions/workflows", "Insights: which pipeline was added last? (#307)"),
            (Misled, "/insights/contributors", "Packages: latest person to join (#308)"),
            (Misled, "/packages/containers", "Issues board: newest image published (#309)"),
            (MisledSorted, "/issues/open", "Pulls: most discussed bug report (#310)"),
            (MisledSorted, "/pulls/review", "Repositories: biggest patch awaiting approval (#311)"),
            (Unseen, "/actions/secrets", "Issues: most recently rotated credential (#312)"),
            (Unseen, "/packages/gems", "Insights: favourite ruby library among our users (#313)"),
        ],
    },
];

const FIRST: [&str; 12] = [
    "Ann", "Bo", "Cruz", "Dana", "Eli", "Fay", "Gus", "Hana", "Ivo", "Jun", "Kai", "Lena",
];
const LAST: [&str; 10] = [
    "Lee", "Moss", "Nash", "Ortiz", "Park", "Quinn", "Rios", "Sato", "Toth", "Uddin",
];

fn slug(s: &str) -> String {
    s.to_lowercase().replace(' ', "-")
}

fn link(id: &str, text: &str, dest: &str) -> (Element, Affordance) {
    (
        Element::new(id, "link", text),
        Affordance {
            action_kind: ActionKind::Click,
            element_id: id.to_string(),
            dest: Some(dest.to_string()),
            mutation: None,
        },
    )
}

fn page(locator: &str, mut elements: Vec<Element>, links: Vec<(Element, Affordance)>) -> PageSpec {
    let mut affordances = Vec::new();
    for (e, a) in links {
        elements.push(e);
        affordances.push(a);
    }
    PageSpec {
        locator: locator.to_string(),
        elements,
        affordances,
    }
}

fn heading(text: &str) -> Element {
    Element::new("title", "heading", text)
}

type Rows = Vec<(String, u32)>;

/// Rows of one data page as listed (unsorted) and as sorted by the metric.
/// The listed order never starts with the top row.
fn rows(page_index: usize) -> (Rows, Rows) {
    let mut listed: Rows = (0..4)
        .map(|i| {
            let n = page_index * 4 + i;
            let name = format!("{} {}", FIRST[n % 12], LAST[n / 12]);
            let value = 100 + ((page_index * 37 + i * 53) % 900) as u32;
            (name, value)
        })
        .collect();
    let top = (0..4).max_by_key(|&i| listed[i].1).expect("four rows");
    if top == 0 {
        listed.swap(0, 1);
    }
    let mut sorted = listed.clone();
    sorted.sort_by_key(|r| std::cmp::Reverse(r.1));
    (listed, sorted)
}

fn row_text(name: &str, metric: &str, value: u32) -> String {
    format!("{name} ({metric} {value})")
}

fn row_elements(rows: &[(String, u32)], metric: &str) -> Vec<Element> {
    rows.iter()
        .enumerate()
        .map(|(i, (n, v))| Element::new(format!("row{}", i + 1), "row", row_text(n, metric, *v)))
        .collect()
}

pub struct BenchTask {
    pub kind: TaskKind,
    pub file: TaskFile,
    /// Locator whose page the relevance rule accepts.
    pub target: String,
    pub sort_link: String,
    pub reference: String,
}

pub struct BenchFixture {
    pub world: WorldFile,
    pub rules: Value,
    pub tasks: Vec<BenchTask>,
}

pub fn generate() -> BenchFixture {
    let mut sites = Vec::new();
    let mut tasks = Vec::new();
    for def in &SITES {
        let mut pages = Vec::new();
        // locator -> (listed first row, sorted first row, sort link id)
        let mut answers: BTreeMap<String, (String, String, String)> = BTreeMap::new();
        let mut root_links = vec![link("help", "Help Center", "/help"), link("about", "About", "/about")];
        let mut page_index = 0;
        for (section, metric, data) in def.sections {
            let sec_loc = format!("/{}", slug(section));
            root_links.push(link(&slug(section), section, &sec_loc));
            let mut sec_links = Vec::new();
            for d in data {
                let loc = format!("{sec_loc}/{}", slug(d));
                let sorted_loc = format!("{loc}/by-{metric}");
                let sort_id = format!("sort-{metric}");
                sec_links.push(link(&slug(d), d, &loc));
                let (listed, sorted) = rows(page_index);
                page_index += 1;
                let mut els = vec![heading(&format!("{section} / {d}"))];
                els.extend(row_elements(&listed, metric));
                pages.push(page(
                    &loc,
                    els,
                    vec![
                        link(&sort_id, &format!("Sort by {}", capitalize(metric)), &sorted_loc),
                        link("home", "Home", "/"),
                    ],
                ));
                let mut els = vec![heading(&format!("{section} / {d} by {metric}"))];
                els.extend(row_elements(&sorted, metric));
                pages.push(page(&sorted_loc, els, vec![link("home", "Home", "/")]));
                answers.insert(
                    loc,
                    (
                        row_text(&listed[0].0, metric, listed[0].1),
                        row_text(&sorted[0].0, metric, sorted[0].1),
                        sort_id,
                    ),
                );
            }
            sec_links.push(link("home", "Home", "/"));
            pages.push(page(&sec_loc, vec![heading(section)], sec_links));
        }
        pages.push(page("/", vec![heading(def.title)], root_links));
        for (loc, text) in [("/help", "Help Center"), ("/about", "About this admin")] {
            pages.push(page(
                loc,
                vec![heading(text), Element::new("info", "text", "Use the navigation links to reach a section.")],
                vec![link("home", "Home", "/")],
            ));
        }
        pages.sort_by(|a, b| a.locator.cmp(&b.locator));
        sites.push(SiteFile {
            site_id: def.id.to_string(),
            root: "/".to_string(),
            pages,
        });

        for (n, (kind, target, text)) in def.tasks.iter().enumerate() {
            let (listed, sorted, sort_id) = answers[*target].clone();
            let reference = text[text.rfind('#').expect("reference")..text.len() - 1].to_string();
            let query = Query::new(format!("{}-{:02}", def.id, n + 1), *text, def.id).expect("valid query");
            tasks.push(BenchTask {
                kind: *kind,
                file: TaskFile {
                    query,
                    key_obs: vec![target.to_string()],
                    validator: ValidatorFile {
                        kind: ValidatorKind::AnswerEquals,
                        expected: if kind.needs_sort() { sorted } else { listed },
                    },
                },
                target: target.to_string(),
                sort_link: sort_id,
                reference,
            });
        }
    }
    let rules = rules_for(&tasks);
    BenchFixture {
        world: WorldFile {
            schema: WORLD_SCHEMA,
            name: Some("admin-bench".to_string()),
            sites,
            tasks: tasks.iter().map(|t| t.file.clone()).collect(),
        },
        rules,
        tasks,
    }
}

fn capitalize(s: &str) -> String {
    let mut c = s.chars();
    c.next()
        .map(|f| f.to_uppercase().chain(c).collect())
        .unwrap_or_default()
}

fn rules_for(tasks: &[BenchTask]) -> Value {
    let mut rules = Vec::new();
    for t in tasks {
        let marker = format!("@ {}\n", t.target);
        let r = &t.reference;
        rules.push(json!({"role":"relevance","when":{"query_contains":r,"page_contains":marker},"then":true}));
        rules.push(json!({"role":"classify_error","when":{"query_contains":r,"visited_lacks":marker},"then":"navigation_failure"}));
        rules.push(json!({"role":"classify_error","when":{"query_contains":r},"then":"execution_failure"}));
        rules.push(json!({"role":"locate_first_error","when":{"query_contains":r},"then":{"first_kind":"stop"}}));
        if t.kind.needs_sort() {
            let metric = t.sort_link.trim_start_matches("sort-");
            rules.push(json!({"role":"reflect","when":{"query_contains":r},
                "then":format!("The rows must be ordered by {metric} before answering: click '{}'.", t.sort_link)}));
        }
    }
    json!({"schema": 1, "rules": rules})
}

pub fn world_json(f: &BenchFixture) -> String {
    serde_json::to_string_pretty(&f.world).expect("world serializes") + "\n"
}

pub fn rules_json(f: &BenchFixture) -> String {
    serde_json::to_string_pretty(&f.rules).expect("rules serialize") + "\n"
}

/// Distinct row texts per site, counted over unsorted pages.
pub fn row_texts(world: &WorldFile) -> BTreeMap<String, BTreeSet<String>> {
    world
        .sites
        .iter()
        .map(|s| {
            let texts = s
                .pages
                .iter()
                .filter(|p| !p.locator.contains("/by-"))
                .flat_map(|p| p.elements.iter().filter(|e| e.role == "row").map(|e| e.text.clone()))
                .collect();
            (s.site_id.clone(), texts)
        })
        .collect()
}
