//! Per-sample saliency plot data and a static SVG rendering of it.

use serde::{Deserialize, Serialize};

use crate::experiment::{SampleScores, ROLES};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Track {
    pub role: String,
    pub query: String,
    pub saliency: Vec<f64>,
    /// Top-k pooled saliency over the ground-truth span.
    pub pooled: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlotData {
    pub sample: String,
    pub num_clips: usize,
    /// Ground-truth `[start, end)` in clip indices.
    pub gt_clips: (usize, usize),
    /// Top-1 predicted span, normalized.
    pub predicted: Option<(f64, f64)>,
    pub tracks: Vec<Track>,
}

impl PlotData {
    /// `queries` holds the five query texts in role order.
    pub fn from_scores(s: &SampleScores, queries: [String; 5]) -> Self {
        let t = s.saliency[0].len();
        let to_clip = |x: f64| ((x * t as f64).round() as usize).min(t);
        let tracks = ROLES
            .iter()
            .zip(queries)
            .enumerate()
            .map(|(k, (role, query))| Track {
                role: role.to_string(),
                query,
                saliency: s.saliency[k].clone(),
                pooled: s.pooled[k],
            })
            .collect();
        Self {
            sample: s.id.clone(),
            num_clips: t,
            gt_clips: (to_clip(s.gt.0), to_clip(s.gt.1)),
            predicted: s.ranked.first().copied(),
            tracks,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plot data serializes") + "\n"
    }

    /// One polyline per role over clip index, with the ground-truth span shaded.
    pub fn to_svg(&self) -> String {
        const W: f64 = 760.0;
        const H: f64 = 360.0;
        const LEFT: f64 = 50.0;
        const RIGHT: f64 = 200.0;
        const TOP: f64 = 30.0;
        const BOTTOM: f64 = 40.0;
        const COLORS: [&str; 5] = ["#1b7837", "#e08214", "#b35806", "#8c510a", "#5e3c99"];

        let vals = self.tracks.iter().flat_map(|t| t.saliency.iter().copied());
        let (mut lo, mut hi) = vals.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
        if !lo.is_finite() || hi - lo < 1e-9 {
            lo -= 1.0;
            hi += 1.0;
        }
        let pw = W - LEFT - RIGHT;
        let ph = H - TOP - BOTTOM;
        let n = self.num_clips.max(1) as f64;
        let x = |i: f64| LEFT + pw * (i + 0.5) / n;
        let y = |v: f64| TOP + ph * (hi - v) / (hi - lo);

        let mut out = format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" font-family=\"sans-serif\" font-size=\"12\">\n"
        );
        out += &format!("<text x=\"{LEFT}\" y=\"18\">{}</text>\n", escape(&self.sample));
        let (gs, ge) = self.gt_clips;
        out += &format!(
            "<rect x=\"{:.1}\" y=\"{TOP}\" width=\"{:.1}\" height=\"{ph}\" fill=\"#dddddd\"/>\n",
            LEFT + pw * gs as f64 / n,
            pw * (ge.saturating_sub(gs)) as f64 / n
        );
        out += &format!(
            "<rect x=\"{LEFT}\" y=\"{TOP}\" width=\"{pw}\" height=\"{ph}\" fill=\"none\" stroke=\"#444\"/>\n"
        );
        for v in [lo, hi] {
            out += &format!(
                "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"end\">{v:.2}</text>\n",
                LEFT - 4.0,
                y(v) + 4.0
            );
        }
        out += &format!(
            "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\">clip</text>\n",
            LEFT + pw / 2.0,
            H - 10.0
        );
        for (k, t) in self.tracks.iter().enumerate() {
            let pts: Vec<String> = t
                .saliency
                .iter()
                .enumerate()
                .map(|(i, &v)| format!("{:.1},{:.1}", x(i as f64), y(v)))
                .collect();
            let c = COLORS[k % COLORS.len()];
            out += &format!(
                "<polyline fill=\"none\" stroke=\"{c}\" stroke-width=\"1.5\" points=\"{}\"/>\n",
                pts.join(" ")
            );
            let ly = TOP + 16.0 * k as f64 + 8.0;
            let lx = W - RIGHT + 12.0;
            out += &format!("<line x1=\"{lx}\" y1=\"{ly}\" x2=\"{}\" y2=\"{ly}\" stroke=\"{c}\" stroke-width=\"2\"/>\n", lx + 18.0);
            out += &format!(
                "<text x=\"{}\" y=\"{}\">{} ({:.2})</text>\n",
                lx + 24.0,
                ly + 4.0,
                escape(&t.role),
                t.pooled
            );
        }
        out + "</svg>\n"
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
