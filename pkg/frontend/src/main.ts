import { HttpService, type Service } from "./api";
import { banner, clear, el } from "./dom";
import { renderClustering } from "./views/clustering";
import { renderLabels } from "./views/labels";
import { renderSegmentation } from "./views/segmentation";
import { renderEvaluation } from "./views/evaluation";
import "./style.css";

// Shell: header with run identity + stage badges, tab bar, one view
// mounted at a time. All data comes from the run-inspection API; the
// browser holds no pipeline state of its own, so a refresh reproduces
// the same views.

type View = (service: Service, root: HTMLElement) => Promise<void>;

const VIEWS: [string, View][] = [
  ["Clustering", renderClustering],
  ["Labels", renderLabels],
  ["Event log", renderSegmentation],
  ["Evaluation", renderEvaluation],
];

export async function boot(service: Service, root: HTMLElement): Promise<void> {
  clear(root);
  const header = el("header", { class: "hero" }, el("h1", {}, "iotminer run inspector"));
  const tabs = el("nav", { class: "tabs" });
  const stage = el("main", { class: "stage" });
  root.append(header, tabs, stage);

  try {
    const state = await service.state();
    const badges = el("div", { class: "stage-badges" });
    for (const s of state.stages) {
      badges.appendChild(el("span", { class: `badge badge-${s.status}` }, `${s.name}: ${s.status}`));
    }
    header.append(
      el("p", { class: "muted" }, `run ${state.config_hash} · ${state.created} · v${state.tool_version}`),
      badges,
    );
  } catch {
    stage.appendChild(
      banner("error", "pipeline service unreachable — start `iotminer serve --run-dir <dir>` and reload"),
    );
    return;
  }

  const buttons: HTMLButtonElement[] = [];
  for (const [title, view] of VIEWS) {
    const button = el("button", { class: "tab" }, title) as HTMLButtonElement;
    button.addEventListener("click", () => {
      buttons.forEach((b) => b.classList.remove("active"));
      button.classList.add("active");
      void view(service, stage);
    });
    buttons.push(button);
    tabs.appendChild(button);
  }
  buttons[0].classList.add("active");
  await VIEWS[0][1](service, stage);
}

if (typeof document !== "undefined" && document.getElementById("app")) {
  void boot(new HttpService(), document.getElementById("app")!);
}
