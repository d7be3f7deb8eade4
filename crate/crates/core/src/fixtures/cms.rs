//! "cms-mini": a single-site store admin of 50 pages and 20 tasks, frozen
//! as `fixtures/cms-mini.json`.

use serde_json::{json, Value};

use crate::env::{Affordance, Mutation, PageSpec, SiteFile, TaskFile, ValidatorFile, ValidatorKind, WorldFile, WORLD_SCHEMA};
use crate::model::{Action, ActionKind, Element, Query};

pub const SITE: &str = "cms";

struct P {
    loc: &'static str,
    title: &'static str,
    links: &'static [(&'static str, &'static str, &'static str)],
    /// (id, text, optional destination)
    rows: &'static [(&'static str, &'static str, &'static str)],
    fields: &'static [(&'static str, &'static str)],
}

const HOME: (&str, &str, &str) = ("home", "Dashboard", "/");

const PAGES: &[P] = &[
    P { loc: "/", title: "Dashboard", links: &[
        ("sales", "SALES", "/sales"), ("catalog", "CATALOG", "/catalog"), ("customers", "CUSTOMERS", "/customers"),
        ("marketing", "MARKETING", "/marketing"), ("content", "CONTENT", "/content"), ("reports", "REPORTS", "/reports"),
        ("stores", "STORES", "/stores"), ("help", "Help", "/help")], rows: &[], fields: &[("revenue", "Lifetime sales $48,210")] },
    P { loc: "/help", title: "Help", links: &[HOME], rows: &[], fields: &[("info", "Contact support@example.test")] },

    P { loc: "/sales", title: "Sales", links: &[
        ("orders", "Orders", "/sales/orders"), ("invoices", "Invoices", "/sales/invoices"),
        ("shipments", "Shipments", "/sales/shipments"), ("credit-memos", "Credit Memos", "/sales/credit-memos"), HOME],
        rows: &[], fields: &[] },
    P { loc: "/sales/orders", title: "Orders", links: &[("filters", "Filters", "/sales/orders/filters"), HOME],
        rows: &[("order-000303", "000303 Grace Nguyen 2024-03-18 Processing", "/sales/orders/000303"),
                ("order-000302", "000302 Ann Park 2024-02-07 Complete", "/sales/orders/000302"),
                ("order-000301", "000301 John Lee 2023-11-20 Complete", "/sales/orders/000301")], fields: &[] },
    P { loc: "/sales/orders/filters", title: "Order Filters", links: &[("apply", "Apply Filters", "/sales/orders/complete"), ("orders", "Orders", "/sales/orders")],
        rows: &[], fields: &[("status", "")] },
    P { loc: "/sales/orders/complete", title: "Orders: Complete", links: &[("sort-date", "Sort by Purchase Date", "/sales/orders/complete/by-date"), ("orders", "Orders", "/sales/orders")],
        rows: &[("order-000302", "000302 Ann Park 2024-02-07 Complete", "/sales/orders/000302"),
                ("order-000301", "000301 John Lee 2023-11-20 Complete", "/sales/orders/000301")], fields: &[] },
    P { loc: "/sales/orders/complete/by-date", title: "Orders: Complete, oldest first", links: &[("orders", "Orders", "/sales/orders")],
        rows: &[("order-000301", "000301 John Lee 2023-11-20 Complete", "/sales/orders/000301"),
                ("order-000302", "000302 Ann Park 2024-02-07 Complete", "/sales/orders/000302")], fields: &[] },
    P { loc: "/sales/orders/000301", title: "Order #000301", links: &[("billing", "Billing Address", "/sales/orders/000301/billing"), ("orders", "Orders", "/sales/orders")],
        rows: &[], fields: &[("status", "Complete"), ("total", "Total $182.00")] },
    P { loc: "/sales/orders/000301/billing", title: "Order #000301 Billing", links: &[("orders", "Orders", "/sales/orders")],
        rows: &[], fields: &[("billing-name", "John Lee"), ("billing-city", "Austin")] },
    P { loc: "/sales/orders/000302", title: "Order #000302", links: &[("billing", "Billing Address", "/sales/orders/000302/billing"), ("orders", "Orders", "/sales/orders")],
        rows: &[], fields: &[("status", "Complete"), ("total", "Total $64.50")] },
    P { loc: "/sales/orders/000302/billing", title: "Order #000302 Billing", links: &[("orders", "Orders", "/sales/orders")],
        rows: &[], fields: &[("billing-name", "Ann Park"), ("billing-city", "Denver")] },
    P { loc: "/sales/orders/000303", title: "Order #000303", links: &[("billing", "Billing Address", "/sales/orders/000303/billing"), ("orders", "Orders", "/sales/orders")],
        rows: &[], fields: &[("status", "Processing"), ("total", "Total $310.25")] },
    P { loc: "/sales/orders/000303/billing", title: "Order #000303 Billing", links: &[("orders", "Orders", "/sales/orders")],
        rows: &[], fields: &[("billing-name", "Grace Nguyen"), ("billing-city", "Portland")] },
    P { loc: "/sales/invoices", title: "Invoices", links: &[HOME],
        rows: &[("inv-1", "INV-5521 $310.25 Open", ""), ("inv-2", "INV-5520 $64.50 Paid", "")], fields: &[] },
    P { loc: "/sales/shipments", title: "Shipments", links: &[HOME],
        rows: &[("shp-1", "SHP-908 UPS in transit", ""), ("shp-2", "SHP-907 USPS delivered", "")], fields: &[] },
    P { loc: "/sales/credit-memos", title: "Credit Memos", links: &[HOME],
        rows: &[("cm-1", "CM-77 $12.00 refund issued", "")], fields: &[] },

    P { loc: "/catalog", title: "Catalog", links: &[
        ("products", "Products", "/catalog/products"), ("categories", "Categories", "/catalog/categories"), HOME], rows: &[], fields: &[] },
    P { loc: "/catalog/products", title: "Products", links: &[("sort-price", "Sort by Price", "/catalog/products/by-price"), HOME],
        rows: &[("p-mb01", "Joust Duffle Bag $34.00", "/catalog/products/24-mb01"),
                ("p-mb02", "Fusion Backpack $59.00", "/catalog/products/24-mb02")], fields: &[] },
    P { loc: "/catalog/products/by-price", title: "Products by Price", links: &[HOME],
        rows: &[("p-mb02", "Fusion Backpack $59.00", "/catalog/products/24-mb02"),
                ("p-mb01", "Joust Duffle Bag $34.00", "/catalog/products/24-mb01")], fields: &[] },
    P { loc: "/catalog/products/24-mb01", title: "Joust Duffle Bag", links: &[("products", "Products", "/catalog/products")],
        rows: &[], fields: &[("sku", "SKU 24-MB01"), ("qty", "Quantity 96")] },
    P { loc: "/catalog/products/24-mb02", title: "Fusion Backpack", links: &[("products", "Products", "/catalog/products")],
        rows: &[], fields: &[("sku", "SKU 24-MB02"), ("qty", "Quantity 7")] },
    P { loc: "/catalog/categories", title: "Categories", links: &[HOME],
        rows: &[("c-1", "Bags 14 products", ""), ("c-2", "Gear 31 products", "")], fields: &[] },

    P { loc: "/customers", title: "Customers", links: &[
        ("all", "All Customers", "/customers/all"), ("online", "Now Online", "/customers/online"), ("groups", "Customer Groups", "/customers/groups"), HOME],
        rows: &[], fields: &[] },
    P { loc: "/customers/all", title: "All Customers", links: &[("sort-spend", "Sort by Lifetime Spend", "/customers/all/by-spend"), HOME],
        rows: &[("cust-lee", "John Lee", "/customers/john-lee"), ("cust-nguyen", "Grace Nguyen", "/customers/grace-nguyen")], fields: &[] },
    P { loc: "/customers/all/by-spend", title: "All Customers by Lifetime Spend", links: &[HOME],
        rows: &[("cust-nguyen", "Grace Nguyen", "/customers/grace-nguyen"), ("cust-lee", "John Lee", "/customers/john-lee")], fields: &[] },
    P { loc: "/customers/grace-nguyen", title: "Grace Nguyen", links: &[("all", "All Customers", "/customers/all")],
        rows: &[], fields: &[("email", "grace.nguyen@example.test"), ("spend", "Lifetime spend $1,940")] },
    P { loc: "/customers/john-lee", title: "John Lee", links: &[("all", "All Customers", "/customers/all")],
        rows: &[], fields: &[("email", "john.lee@example.test"), ("spend", "Lifetime spend $610")] },
    P { loc: "/customers/online", title: "Now Online", links: &[HOME], rows: &[("on-1", "Ann Park (2 min)", "")], fields: &[] },
    P { loc: "/customers/groups", title: "Customer Groups", links: &[HOME],
        rows: &[("g-1", "Wholesale 12 members", ""), ("g-2", "Retailer 40 members", "")], fields: &[] },

    P { loc: "/marketing", title: "Marketing", links: &[
        ("promotions", "Cart Price Rules", "/marketing/promotions"), ("newsletter", "Newsletter Queue", "/marketing/newsletter"),
        ("marketing-reviews", "All Reviews", "/marketing/reviews"), HOME], rows: &[], fields: &[] },
    P { loc: "/marketing/promotions", title: "Cart Price Rules", links: &[HOME], rows: &[("r-1", "SPRING20 active", ""), ("r-2", "FREESHIP inactive", "")], fields: &[] },
    P { loc: "/marketing/newsletter", title: "Newsletter Queue", links: &[HOME], rows: &[("n-1", "May digest scheduled", "")], fields: &[] },
    P { loc: "/marketing/reviews", title: "All Reviews", links: &[HOME], rows: &[("rv-1", "Fusion Backpack 5 stars", ""), ("rv-2", "Joust Duffle Bag 3 stars", "")], fields: &[] },

    P { loc: "/content", title: "Content", links: &[
        ("pages", "Pages", "/content/pages"), ("blocks", "Blocks", "/content/blocks"), ("widgets", "Widgets", "/content/widgets"),
        ("media", "Media Gallery", "/content/media"), HOME], rows: &[], fields: &[] },
    P { loc: "/content/pages", title: "Pages", links: &[HOME], rows: &[("pg-1", "About Us enabled", ""), ("pg-2", "Privacy Policy enabled", "")], fields: &[] },
    P { loc: "/content/blocks", title: "Blocks", links: &[HOME], rows: &[("b-1", "footer-links", "")], fields: &[] },
    P { loc: "/content/widgets", title: "Widgets", links: &[HOME], rows: &[("w-1", "Home Banner", "")], fields: &[] },
    P { loc: "/content/media", title: "Media Gallery", links: &[HOME], rows: &[("m-1", "logo.svg", "")], fields: &[] },

    P { loc: "/reports", title: "Reports", links: &[
        ("search-terms", "Search Terms", "/reports/search-terms"), ("bestsellers", "Bestsellers", "/reports/bestsellers"),
        ("product-reviews", "Product Reviews", "/reports/reviews"), ("low-stock", "Low Stock", "/reports/low-stock"), HOME],
        rows: &[], fields: &[] },
    P { loc: "/reports/search-terms", title: "Search Terms", links: &[("sort-hits", "Sort by Hits", "/reports/search-terms/by-hits"), HOME],
        rows: &[("t-1", "tanks (hits 23)", ""), ("t-2", "hoodie (hits 128)", ""), ("t-3", "yoga mat (hits 57)", "")], fields: &[] },
    P { loc: "/reports/search-terms/by-hits", title: "Search Terms by Hits", links: &[HOME],
        rows: &[("t-2", "hoodie (hits 128)", ""), ("t-3", "yoga mat (hits 57)", ""), ("t-1", "tanks (hits 23)", "")], fields: &[] },
    P { loc: "/reports/bestsellers", title: "Bestsellers", links: &[("sort-qty", "Sort by Quantity", "/reports/bestsellers/by-qty"), HOME],
        rows: &[("bs-1", "Joust Duffle Bag (qty 40)", ""), ("bs-2", "Fusion Backpack (qty 75)", "")], fields: &[] },
    P { loc: "/reports/bestsellers/by-qty", title: "Bestsellers by Quantity", links: &[HOME],
        rows: &[("bs-2", "Fusion Backpack (qty 75)", ""), ("bs-1", "Joust Duffle Bag (qty 40)", "")], fields: &[] },
    P { loc: "/reports/reviews", title: "Product Reviews Report", links: &[HOME], rows: &[("pr-1", "Fusion Backpack 12 reviews", "")], fields: &[] },
    P { loc: "/reports/low-stock", title: "Low Stock", links: &[HOME], rows: &[("ls-1", "Fusion Backpack qty 7", "")], fields: &[] },

    P { loc: "/stores", title: "Stores", links: &[
        ("settings", "Configuration", "/stores/settings"), ("tax-rules", "Tax Rules", "/stores/tax-rules"),
        ("currency", "Currency Rates", "/stores/currency"), ("attributes", "Product Attributes", "/stores/attributes"), HOME],
        rows: &[], fields: &[] },
    P { loc: "/stores/settings", title: "Configuration", links: &[HOME], rows: &[], fields: &[("store-name", "Luma Outlet"), ("locale", "en_US")] },
    P { loc: "/stores/tax-rules", title: "Tax Rules", links: &[HOME], rows: &[("tx-1", "US-TX 8.25%", ""), ("tx-2", "US-CO 2.9%", "")], fields: &[] },
    P { loc: "/stores/currency", title: "Currency Rates", links: &[HOME], rows: &[("cur-1", "USD/EUR 0.92", "")], fields: &[] },
    P { loc: "/stores/attributes", title: "Product Attributes", links: &[HOME], rows: &[("at-1", "color", ""), ("at-2", "size", "")], fields: &[] },
];

/// (id, query, key pages, validator kind, expected)
const TASKS: &[(&str, &str, &[&str], ValidatorKind, &str)] = &[
    ("cms-01", "What is the billing name of the oldest complete order?", &["/sales/orders/complete/by-date", "/sales/orders/000301/billing"], ValidatorKind::AnswerEquals, "John Lee"),
    ("cms-02", "What is the top search term in the store?", &["/reports/search-terms/by-hits"], ValidatorKind::AnswerContains, "hoodie"),
    ("cms-03", "Which customer has the highest lifetime spend?", &["/customers/all/by-spend"], ValidatorKind::AnswerEquals, "Grace Nguyen"),
    ("cms-04", "What is the status of order 000303?", &["/sales/orders/000303"], ValidatorKind::AnswerEquals, "Processing"),
    ("cms-05", "Which city is on the billing address of order 000302?", &["/sales/orders/000302/billing"], ValidatorKind::AnswerEquals, "Denver"),
    ("cms-06", "Which product sold the most units?", &["/reports/bestsellers/by-qty"], ValidatorKind::AnswerContains, "Fusion Backpack"),
    ("cms-07", "What is the most expensive product?", &["/catalog/products/by-price"], ValidatorKind::AnswerContains, "Fusion Backpack"),
    ("cms-08", "How many Joust Duffle Bags are in stock?", &["/catalog/products/24-mb01"], ValidatorKind::AnswerContains, "96"),
    ("cms-09", "What is Grace Nguyen's email address?", &["/customers/grace-nguyen"], ValidatorKind::AnswerContains, "grace.nguyen@example.test"),
    ("cms-10", "Open the tax rules page.", &["/stores/tax-rules"], ValidatorKind::StateReached, "/stores/tax-rules"),
    ("cms-11", "What is the store's configured name?", &["/stores/settings"], ValidatorKind::AnswerEquals, "Luma Outlet"),
    ("cms-12", "Which product is low on stock?", &["/reports/low-stock"], ValidatorKind::AnswerContains, "Fusion Backpack"),
    ("cms-13", "Which cart price rule is active?", &["/marketing/promotions"], ValidatorKind::AnswerContains, "SPRING20"),
    ("cms-14", "Show the media gallery.", &["/content/media"], ValidatorKind::StateReached, "/content/media"),
    ("cms-15", "Who is online right now?", &["/customers/online"], ValidatorKind::AnswerContains, "Ann Park"),
    ("cms-16", "What is the total of order 000301?", &["/sales/orders/000301"], ValidatorKind::AnswerContains, "182.00"),
    ("cms-17", "Which shipment is still in transit?", &["/sales/shipments"], ValidatorKind::AnswerContains, "SHP-908"),
    ("cms-18", "How many members are in the Retailer customer group?", &["/customers/groups"], ValidatorKind::AnswerContains, "40"),
    ("cms-19", "Which invoice is still open?", &["/sales/invoices"], ValidatorKind::AnswerContains, "INV-5521"),
    ("cms-20", "Which review gave five stars?", &["/marketing/reviews"], ValidatorKind::AnswerContains, "Fusion Backpack"),
];

fn page_spec(p: &P) -> PageSpec {
    let mut elements = vec![Element::new("title", "heading", p.title)];
    let mut affordances = Vec::new();
    let click = |id: &str, dest: &str| Affordance {
        action_kind: ActionKind::Click,
        element_id: id.to_string(),
        dest: Some(dest.to_string()),
        mutation: None,
    };
    for (id, text) in p.fields {
        if text.is_empty() {
            elements.push(Element::new(*id, "input", ""));
            affordances.push(Affordance {
                action_kind: ActionKind::Type,
                element_id: id.to_string(),
                dest: None,
                mutation: Some(Mutation::SetText),
            });
        } else {
            elements.push(Element::new(*id, "field", *text));
        }
    }
    for (id, text, dest) in p.rows {
        elements.push(Element::new(*id, "row", *text));
        if !dest.is_empty() {
            affordances.push(click(id, dest));
        }
    }
    for (id, text, dest) in p.links {
        elements.push(Element::new(*id, "link", *text));
        affordances.push(click(id, dest));
    }
    PageSpec {
        locator: p.loc.to_string(),
        elements,
        affordances,
    }
}

pub fn world() -> WorldFile {
    WorldFile {
        schema: WORLD_SCHEMA,
        name: Some("cms-mini".to_string()),
        sites: vec![SiteFile {
            site_id: SITE.to_string(),
            root: "/".to_string(),
            pages: PAGES.iter().map(page_spec).collect(),
        }],
        tasks: TASKS
            .iter()
            .map(|(id, text, keys, kind, expected)| TaskFile {
                query: Query::new(*id, *text, SITE).expect("valid query"),
                key_obs: keys.iter().map(|k| k.to_string()).collect(),
                validator: ValidatorFile {
                    kind: *kind,
                    expected: expected.to_string(),
                },
            })
            .collect(),
    }
}

pub fn world_json() -> String {
    serde_json::to_string_pretty(&world()).expect("world serializes") + "\n"
}

/// The long-form solution of `cms-01`: filter to complete orders, sort by
/// purchase date, open the oldest and read its billing name.
pub fn oldest_complete_order_actions() -> Vec<Action> {
    vec![
        Action::click("sales"),
        Action::click("orders"),
        Action::click("filters"),
        Action::type_text("status", "Complete").expect("valid action"),
        Action::click("apply"),
        Action::click("sort-date"),
        Action::click("order-000301"),
        Action::click("billing"),
        Action::stop("John Lee"),
    ]
}

/// The wrong-sort failure on `cms-02`: answers from the unsorted list.
pub fn wrong_sort_actions() -> Vec<Action> {
    vec![Action::click("reports"), Action::click("search-terms"), Action::stop("tanks (hits 23)")]
}

/// Rules for the cms tasks: failures that never reached a key page are
/// navigation failures, everything else is an execution failure; sorting
/// mistakes are located at the Stop step and explained.
pub fn rules() -> Value {
    let mut rules = Vec::new();
    for (_, text, keys, _, _) in TASKS {
        let q = text.to_string();
        for k in *keys {
            rules.push(json!({"role":"classify_error","when":{"query_contains":q,"visited_lacks":format!("@ {k}\n")},"then":"navigation_failure"}));
        }
        rules.push(json!({"role":"classify_error","when":{"query_contains":q},"then":"execution_failure"}));
    }
    rules.push(json!({"role":"locate_first_error","when":{"action_lacks":"sort"},"then":{"first_kind":"stop"}}));
    rules.push(json!({"role":"reflect","when":{"action_lacks":"sort"},
        "then":"The list was not sorted before answering; sort it first: click 'sort-hits'."}));
    json!({"schema": 1, "rules": rules})
}

pub fn rules_json() -> String {
    serde_json::to_string_pretty(&rules()).expect("rules serialize") + "\n"
}
