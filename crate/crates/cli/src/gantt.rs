//! Gantt rendering of schedule files: a fixed-width text view and a
//! deterministic SVG. Renderers consume only the schedule file contents,
//! never planner internals.

use brickplan_core::mission::{parse_action_id, Verb};
use brickplan_core::taems::AgentId;
use brickplan_core::Schedule;

use std::collections::BTreeMap;

const TEXT_LANE_WIDTH: usize = 100;
const SVG_PX_PER_SECOND: f64 = 6.0;
const SVG_LANE_HEIGHT: f64 = 34.0;
const SVG_LEFT_MARGIN: f64 = 90.0;

fn verb_of(action: &brickplan_core::NodeId) -> Option<Verb> {
    parse_action_id(action).map(|a| a.verb)
}

fn verb_letter(verb: Verb) -> char {
    match verb {
        Verb::GoToPile => 'G',
        Verb::PickUp => 'P',
        Verb::GoToWall => 'W',
        Verb::PutDown => 'D',
    }
}

/// Pile runs draw blue, pick-ups red, wall runs yellow and placements
/// green.
fn verb_color(verb: Verb) -> &'static str {
    match verb {
        Verb::GoToPile => "blue",
        Verb::PickUp => "red",
        Verb::GoToWall => "yellow",
        Verb::PutDown => "green",
    }
}

fn lanes(schedule: &Schedule) -> BTreeMap<&AgentId, Vec<&brickplan_core::ScheduledAction>> {
    let mut lanes: BTreeMap<&AgentId, Vec<&brickplan_core::ScheduledAction>> = BTreeMap::new();
    for entry in &schedule.entries {
        lanes.entry(&entry.agent).or_default().push(entry);
    }
    for entries in lanes.values_mut() {
        entries.sort_by(|a, b| {
            a.start
                .partial_cmp(&b.start)
                .unwrap_or(std::cmp::Ordering::Equal)
        });
    }
    lanes
}

/// Fixed-width ASCII Gantt: one lane per agent, a letter per action kind,
/// followed by the exact entry table and the binding precedence edges.
pub fn render_text(schedule: &Schedule) -> String {
    let mut out = String::new();
    let lanes = lanes(schedule);
    if lanes.is_empty() {
        out.push_str("(empty schedule)\n");
        return out;
    }
    let span = schedule.makespan.max(1e-9);
    let name_width = lanes.keys().map(|a| a.as_str().len()).max().unwrap_or(4);
    for (agent, entries) in &lanes {
        let mut lane = vec![' '; TEXT_LANE_WIDTH];
        for entry in entries {
            let Some(verb) = verb_of(&entry.action) else {
                continue;
            };
            let from = ((entry.start / span) * TEXT_LANE_WIDTH as f64).floor() as usize;
            let to = ((entry.end / span) * TEXT_LANE_WIDTH as f64).ceil() as usize;
            for cell in lane
                .iter_mut()
                .take(to.min(TEXT_LANE_WIDTH))
                .skip(from.min(TEXT_LANE_WIDTH))
            {
                *cell = verb_letter(verb);
            }
        }
        let lane: String = lane.into_iter().collect();
        out.push_str(&format!("{:<name_width$} |{}|\n", agent.as_str(), lane));
    }
    out.push_str("legend: G go-to-pile, P pick-up, W go-to-wall, D put-down\n");
    out.push_str(&format!(
        "makespan: {}  cost: {}  quality: {}\n",
        schedule.makespan, schedule.total_cost, schedule.total_quality
    ));
    out.push('\n');
    for (agent, entries) in &lanes {
        for entry in entries {
            out.push_str(&format!(
                "{:<name_width$}  {:<12} {:>10.3} {:>10.3}\n",
                agent.as_str(),
                entry.action.as_str(),
                entry.start,
                entry.end
            ));
        }
    }
    if !schedule.binding_enables.is_empty() {
        out.push('\n');
        out.push_str("binding enables:\n");
        for (source, target) in &schedule.binding_enables {
            out.push_str(&format!("  {} -> {}\n", source, target));
        }
    }
    out
}

/// Deterministic SVG Gantt: one lane per agent, one rect per action, dashed
/// arrows for the precedence edges that bind the schedule.
pub fn render_svg(schedule: &Schedule) -> String {
    let lanes = lanes(schedule);
    let width = SVG_LEFT_MARGIN + schedule.makespan.max(1.0) * SVG_PX_PER_SECOND + 20.0;
    let height = 50.0 + lanes.len() as f64 * SVG_LANE_HEIGHT;
    let mut out = String::new();
    out.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{:.2}\" height=\"{:.2}\" \
         viewBox=\"0 0 {:.2} {:.2}\">\n",
        width, height, width, height
    ));
    out.push_str("<style>text{font-family:monospace;font-size:12px;}</style>\n");

    let lane_index: BTreeMap<&AgentId, usize> =
        lanes.keys().enumerate().map(|(i, a)| (*a, i)).collect();
    let lane_y = |i: usize| 30.0 + i as f64 * SVG_LANE_HEIGHT;
    let x_of = |t: f64| SVG_LEFT_MARGIN + t * SVG_PX_PER_SECOND;

    for (agent, entries) in &lanes {
        let i = lane_index[agent];
        let y = lane_y(i);
        out.push_str(&format!(
            "<text x=\"4\" y=\"{:.2}\">{}</text>\n",
            y + 16.0,
            agent.as_str()
        ));
        for entry in entries {
            let Some(verb) = verb_of(&entry.action) else {
                continue;
            };
            out.push_str(&format!(
                "<rect class=\"action\" x=\"{:.2}\" y=\"{:.2}\" width=\"{:.2}\" height=\"{:.2}\" \
                 fill=\"{}\" stroke=\"black\" stroke-width=\"0.5\"><title>{}</title></rect>\n",
                x_of(entry.start),
                y,
                ((entry.end - entry.start) * SVG_PX_PER_SECOND).max(0.5),
                SVG_LANE_HEIGHT - 10.0,
                verb_color(verb),
                entry.action
            ));
        }
    }

    // Dashed arrows for the tight precedence edges.
    let entry_of: BTreeMap<&brickplan_core::NodeId, &brickplan_core::ScheduledAction> =
        schedule.entries.iter().map(|e| (&e.action, e)).collect();
    for (source, target) in &schedule.binding_enables {
        let (Some(se), Some(te)) = (entry_of.get(source), entry_of.get(target)) else {
            continue;
        };
        let (Some(si), Some(ti)) = (lane_index.get(&se.agent), lane_index.get(&te.agent)) else {
            continue;
        };
        out.push_str(&format!(
            "<line class=\"enables\" x1=\"{:.2}\" y1=\"{:.2}\" x2=\"{:.2}\" y2=\"{:.2}\" \
             stroke=\"black\" stroke-dasharray=\"4 3\" stroke-width=\"1\"/>\n",
            x_of(se.end),
            lane_y(*si) + (SVG_LANE_HEIGHT - 10.0) / 2.0,
            x_of(te.start),
            lane_y(*ti) + (SVG_LANE_HEIGHT - 10.0) / 2.0,
        ));
    }

    let axis_y = 30.0 + lanes.len() as f64 * SVG_LANE_HEIGHT;
    out.push_str(&format!(
        "<line x1=\"{:.2}\" y1=\"{:.2}\" x2=\"{:.2}\" y2=\"{:.2}\" stroke=\"black\"/>\n",
        SVG_LEFT_MARGIN,
        axis_y,
        x_of(schedule.makespan.max(1.0)),
        axis_y
    ));
    out.push_str(&format!(
        "<text x=\"{:.2}\" y=\"{:.2}\">t = {} s</text>\n",
        x_of(schedule.makespan.max(1.0)) - 60.0,
        axis_y + 16.0,
        schedule.makespan
    ));
    out.push_str("</svg>\n");
    out
}
