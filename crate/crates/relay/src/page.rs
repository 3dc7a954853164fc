use crate::registry::SessionId;

pub const SESSION_PLACEHOLDER: &str = "{{SESSION_ID}}";

pub fn index(live_sessions: usize) -> String {
    format!(
        r#"<!doctype html>
<html lang="en">
<head><meta charset="utf-8"><title>Remote EKG relay</title></head>
<body>
<h1>Remote EKG relay</h1>
<p>This service pairs a patient's EKG stream with one doctor's viewer.</p>
<ul>
<li>Patient devices stream to <code>/in/&lt;id&gt;</code> over a WebSocket.</li>
<li>Doctors open <code>/&lt;id&gt;</code> in a browser once the patient is streaming.</li>
</ul>
<p>Live sessions: <span id="live-sessions">{live_sessions}</span></p>
</body>
</html>
"#
    )
}

/// Doctor page for `id`, from `template` when given.
pub fn viewer(template: Option<&str>, id: &SessionId) -> String {
    template
        .unwrap_or(DEFAULT_VIEWER)
        .replace(SESSION_PLACEHOLDER, id.as_str())
}

/// Minimal stand-alone viewer: connects to `/out/<id>` and plots the raw
/// trace with the current connection status.
const DEFAULT_VIEWER: &str = r#"<!doctype html>
<html lang="en">
<head>
<meta charset="utf-8">
<title>EKG {{SESSION_ID}}</title>
<style>
body { font-family: sans-serif; margin: 1em; }
canvas { border: 1px solid #c99; background: #fff8f8; width: 100%; height: 300px; }
</style>
</head>
<body data-session-id="{{SESSION_ID}}" data-ws-path="/out/{{SESSION_ID}}">
<h1>Session {{SESSION_ID}}</h1>
<p>Status: <span id="status">connecting</span></p>
<canvas id="trace" width="1250" height="300"></canvas>
<script>
(function () {
  const id = document.body.dataset.sessionId;
  const status = document.getElementById("status");
  const canvas = document.getElementById("trace");
  const ctx = canvas.getContext("2d");
  const points = [];
  const proto = location.protocol === "https:" ? "wss:" : "ws:";
  const ws = new WebSocket(proto + "//" + location.host + "/out/" + encodeURIComponent(id));
  ws.onopen = () => { status.textContent = "connected"; };
  ws.onclose = (ev) => { status.textContent = ev.reason || "closed"; };
  ws.onmessage = (ev) => {
    const m = JSON.parse(ev.data);
    points.push(m.v);
    if (points.length > 2500) points.shift();
  };
  function draw() {
    ctx.clearRect(0, 0, canvas.width, canvas.height);
    ctx.beginPath();
    const step = canvas.width / 2500;
    points.forEach((v, i) => {
      const y = canvas.height - (v / 1023) * canvas.height;
      if (i === 0) ctx.moveTo(0, y); else ctx.lineTo(i * step, y);
    });
    ctx.stroke();
    requestAnimationFrame(draw);
  }
  requestAnimationFrame(draw);
})();
</script>
</body>
</html>
"#;
