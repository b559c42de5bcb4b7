/**
 * views.ts — the four routes: Login, Overview, Pictorial, Graph.
 *
 * Rendering is plain DOM over view-model output. Views hold no math: every
 * number on screen comes from a ViewModel call.
 */

import { AuthFailed, Endpoint, NetworkFailure } from "./api.js";
import { NoData } from "./analytics.js";
import { AppStore, EmptyStore } from "./store.js";
import { Rasterizer, canvasRasterizer, exportViewSvg, triggerDownload, ExportResult } from "./export.js";
import { ViewModel } from "./viewmodel.js";
import { fieldValue } from "./wire.js";

export type Route = "Login" | "Overview" | "Pictorial" | "Graph";

export interface ViewState {
  route: Route;
  selectedChild: string | null;
  sliderAge: number;
  stalenessBanner: string | null; // local update date, shown while offline
}

const GRAPH_WIDTH = 460;
const GRAPH_HEIGHT = 320;
const GRAPH_MARGIN = 40;

export class App {
  state: ViewState = { route: "Login", selectedChild: null, sliderAge: 0, stalenessBanner: null };
  private token: string | null = null;
  private currentSvg: SVGSVGElement | null = null;

  constructor(
    private readonly root: HTMLElement,
    private readonly client: Endpoint,
    private readonly store: AppStore,
    private readonly vm: ViewModel,
    private readonly rasterizer: Rasterizer = canvasRasterizer,
  ) {}

  start(): void {
    this.render();
  }

  // -- login / logout -------------------------------------------------------

  async login(token: string, rememberMe: boolean): Promise<void> {
    let offline = false;
    try {
      await this.store.sync(this.client, token);
    } catch (err) {
      if (err instanceof AuthFailed) {
        this.renderLogin("Token not recognized. Please check it and try again.", true);
        return;
      }
      if (err instanceof NetworkFailure && this.store.isPopulated) {
        offline = true; // serve what the device already has
      } else {
        this.renderLogin("The service is unreachable and no local data exists yet.", false);
        return;
      }
    }
    if (rememberMe) {
      this.store.rememberToken(token);
    } else {
      this.store.forgetToken();
    }
    this.token = token;
    this.state.stalenessBanner = offline ? this.vm.storedUpdateDate() : null;
    this.state.selectedChild = this.vm.firstSelectableChild();
    this.state.route = "Overview";
    this.render();
  }

  async sendRecoveryHint(hint: string): Promise<void> {
    const notice = this.root.querySelector("#forgot-notice") as HTMLElement;
    try {
      const fields = await this.client.call("RequestIdRecovery", [["hint", hint]]);
      const requestId = fieldValue(fields, "requestId");
      notice.textContent =
        `Request #${requestId} recorded. The team will contact you and hand over your ID in person.`;
    } catch {
      notice.textContent = "Could not send the request. Please try again later.";
    }
  }

  logout(): void {
    this.token = null;
    this.state = { route: "Login", selectedChild: null, sliderAge: 0, stalenessBanner: null };
    this.render();
  }

  goto(route: Route): void {
    this.state.route = route;
    this.render();
  }

  selectChild(childId: string): void {
    this.state.selectedChild = childId;
    this.render();
  }

  setSliderAge(age: number): void {
    this.state.sliderAge = age;
    this.render();
  }

  async exportCurrent(): Promise<{ result: ExportResult; svgMarkup: string } | null> {
    if (!this.currentSvg) {
      return null;
    }
    const markup = this.currentSvg.outerHTML;
    try {
      const result = await exportViewSvg(this.currentSvg, this.rasterizer);
      triggerDownload(result, this.state.route === "Graph" ? "height-graph.png" : "height-comparison.png");
      return { result, svgMarkup: markup };
    } catch {
      this.toast("Export failed; nothing was saved.");
      return null;
    }
  }

  private toast(message: string): void {
    const el = document.createElement("div");
    el.className = "toast";
    el.textContent = message;
    this.root.appendChild(el);
  }

  // -- rendering --------------------------------------------------------------

  render(): void {
    this.currentSvg = null;
    switch (this.state.route) {
      case "Login":
        this.renderLogin(null, false);
        break;
      case "Overview":
        this.renderOverview();
        break;
      case "Pictorial":
        this.renderPictorial();
        break;
      case "Graph":
        this.renderGraph();
        break;
    }
  }

  private shell(content: HTMLElement, title: string): void {
    this.root.textContent = "";
    const banner = this.state.stalenessBanner;
    if (banner) {
      const div = document.createElement("div");
      div.id = "staleness-banner";
      div.className = "banner";
      div.textContent = `Offline: showing data last updated ${banner}`;
      this.root.appendChild(div);
    }
    if (this.state.route !== "Login") {
      const nav = document.createElement("nav");
      const overviewBtn = document.createElement("button");
      overviewBtn.id = "nav-overview";
      overviewBtn.textContent = "Overview";
      overviewBtn.onclick = () => this.goto("Overview");
      const logoutBtn = document.createElement("button");
      logoutBtn.id = "nav-logout";
      logoutBtn.textContent = "Log out";
      logoutBtn.onclick = () => this.logout();
      nav.append(overviewBtn, logoutBtn);
      this.root.appendChild(nav);
    }
    const h = document.createElement("h1");
    h.textContent = title;
    this.root.append(h, content);
  }

  private renderLogin(error: string | null, clearField: boolean): void {
    this.state.route = "Login";
    const form = document.createElement("div");
    form.className = "login";

    const input = document.createElement("input");
    input.id = "token-input";
    input.type = "password";
    input.placeholder = "Your token ID";
    if (!clearField && this.store.rememberedToken) {
      input.value = this.store.rememberedToken;
    }

    const remember = document.createElement("input");
    remember.id = "remember-me";
    remember.type = "checkbox";
    remember.checked = this.store.rememberedToken !== null;
    const rememberLabel = document.createElement("label");
    rememberLabel.append(remember, document.createTextNode(" Remember me"));

    const button = document.createElement("button");
    button.id = "login-button";
    button.className = "primary";
    button.textContent = "Log in";
    button.onclick = () => void this.login(input.value, remember.checked);

    const errorBox = document.createElement("div");
    errorBox.id = "login-error";
    errorBox.className = "error";
    if (error) {
      errorBox.textContent = error;
    }

    const forgot = document.createElement("a");
    forgot.id = "forgot-link";
    forgot.href = "#";
    forgot.textContent = "Forgot your ID?";
    const hintBox = document.createElement("div");
    hintBox.id = "forgot-box";
    hintBox.hidden = true;
    const hint = document.createElement("input");
    hint.id = "hint-input";
    hint.placeholder = "Tell the team who you are (no names needed)";
    const send = document.createElement("button");
    send.id = "hint-send";
    send.textContent = "Send request";
    send.onclick = () => void this.sendRecoveryHint(hint.value);
    const notice = document.createElement("div");
    notice.id = "forgot-notice";
    hintBox.append(hint, send, notice);
    forgot.onclick = (ev) => {
      ev.preventDefault();
      hintBox.hidden = false;
    };

    form.append(input, rememberLabel, button, errorBox, forgot, hintBox);
    this.shell(form, "Welcome back");
  }

  private renderOverview(): void {
    const menu = document.createElement("div");
    menu.className = "menu";
    const pictorial = document.createElement("button");
    pictorial.id = "menu-pictorial";
    pictorial.textContent = "Compare heights";
    pictorial.onclick = () => this.goto("Pictorial");
    const graph = document.createElement("button");
    graph.id = "menu-graph";
    graph.textContent = "Height over time";
    graph.onclick = () => this.goto("Graph");
    menu.append(pictorial, graph);

    // Inert placeholders; real social sharing is covered by PNG export.
    const social = document.createElement("div");
    social.className = "social-row";
    for (const name of ["share-a", "share-b", "share-c"]) {
      const icon = document.createElement("span");
      icon.className = "social-icon";
      icon.dataset.name = name;
      icon.textContent = "●";
      social.appendChild(icon);
    }
    menu.appendChild(social);
    this.shell(menu, "Your children");
  }

  private childSelector(): HTMLSelectElement {
    const select = document.createElement("select");
    select.id = "child-select";
    for (const option of this.vm.childOptions()) {
      const el = document.createElement("option");
      el.value = option.childId;
      el.textContent = option.selectable
        ? `Child ${option.childId}`
        : `Child ${option.childId} (no measurements yet)`;
      el.disabled = !option.selectable;
      if (option.childId === this.state.selectedChild) {
        el.selected = true;
      }
      select.appendChild(el);
    }
    select.onchange = () => this.selectChild(select.value);
    return select;
  }

  private exportButton(): HTMLButtonElement {
    const button = document.createElement("button");
    button.id = "export-button";
    button.textContent = "Share snapshot";
    button.onclick = () => void this.exportCurrent();
    return button;
  }

  private renderPictorial(): void {
    const container = document.createElement("div");
    container.className = "pictorial";
    let childId = this.state.selectedChild;
    try {
      if (!childId) {
        childId = this.vm.firstSelectableChild();
      }
      if (!childId) {
        throw new NoData("no child with measurements");
      }
      this.state.selectedChild = childId;
      this.state.sliderAge = this.vm.clampAge(childId, this.state.sliderAge);
      const view = this.vm.pictorial(childId, this.state.sliderAge);

      container.append(this.childSelector(), this.exportButton());

      const svg = this.silhouetteSvg(view.childPx, view.referencePx, view.maxPx,
        view.childLabel, view.referenceLabel);
      container.appendChild(svg);
      this.currentSvg = svg;

      const slider = document.createElement("input");
      slider.id = "age-slider";
      slider.type = "range";
      slider.min = String(view.slider.min);
      slider.max = String(view.slider.max);
      slider.step = "0.1"; // continuous response, not snapped to survey ages
      slider.value = String(view.slider.value);
      slider.oninput = () => this.setSliderAge(Number(slider.value));
      const sliderLabel = document.createElement("div");
      sliderLabel.id = "slider-age-label";
      sliderLabel.textContent = `Age: ${view.slider.value.toFixed(1)} months`;
      container.append(slider, sliderLabel);
    } catch (err) {
      if (err instanceof NoData || err instanceof EmptyStore) {
        const note = document.createElement("p");
        note.id = "no-data-note";
        note.textContent = "No measurements to show yet.";
        container.appendChild(note);
      } else {
        throw err;
      }
    }
    this.shell(container, "Your child and the national average");
  }

  private silhouetteSvg(childPx: number, referencePx: number, maxPx: number,
                        childLabel: string, referenceLabel: string): SVGSVGElement {
    const svgNs = "http://www.w3.org/2000/svg";
    const width = 360;
    const height = maxPx + 60;
    const svg = document.createElementNS(svgNs, "svg");
    svg.id = "pictorial-svg";
    svg.setAttribute("xmlns", svgNs);
    svg.setAttribute("width", String(width));
    svg.setAttribute("height", String(height));
    svg.setAttribute("viewBox", `0 0 ${width} ${height}`);

    const figure = (cx: number, px: number, cls: string, labelText: string, labelId: string) => {
      const group = document.createElementNS(svgNs, "g");
      group.setAttribute("class", `silhouette ${cls}`);
      group.setAttribute("data-px", String(px));
      const headR = px * 0.12;
      const head = document.createElementNS(svgNs, "circle");
      head.setAttribute("cx", String(cx));
      head.setAttribute("cy", String(height - px + headR));
      head.setAttribute("r", String(headR));
      const body = document.createElementNS(svgNs, "rect");
      body.setAttribute("x", String(cx - px * 0.14));
      body.setAttribute("y", String(height - px + 2 * headR));
      body.setAttribute("width", String(px * 0.28));
      body.setAttribute("height", String(px - 2 * headR));
      body.setAttribute("rx", String(px * 0.08));
      const label = document.createElementNS(svgNs, "text");
      label.id = labelId;
      label.setAttribute("x", String(cx));
      label.setAttribute("y", String(height - px - 8));
      label.setAttribute("text-anchor", "middle");
      label.textContent = labelText;
      group.append(head, body, label);
      return group;
    };

    // Pictorial view colors: child green, national average grey.
    svg.appendChild(figure(width * 0.3, childPx, "child", childLabel, "child-label"));
    svg.appendChild(figure(width * 0.7, referencePx, "reference", referenceLabel, "reference-label"));
    return svg;
  }

  private renderGraph(): void {
    const container = document.createElement("div");
    container.className = "graph";
    let childId = this.state.selectedChild;
    try {
      if (!childId) {
        childId = this.vm.firstSelectableChild();
      }
      if (!childId) {
        throw new NoData("no child with measurements");
      }
      this.state.selectedChild = childId;
      const series = this.vm.graph(childId);
      container.append(this.childSelector(), this.exportButton());
      const svg = this.graphSvg(series.childPoints, series.referencePoints, series.ageSpan);
      container.appendChild(svg);
      this.currentSvg = svg;
    } catch (err) {
      if (err instanceof NoData || err instanceof EmptyStore) {
        const note = document.createElement("p");
        note.id = "no-data-note";
        note.textContent = "No measurements to plot yet.";
        container.appendChild(note);
      } else {
        throw err;
      }
    }
    this.shell(container, "Height over time");
  }

  private graphSvg(childPoints: ReadonlyArray<readonly [number, number]>,
                   referencePoints: ReadonlyArray<readonly [number, number]>,
                   ageSpan: readonly [number, number]): SVGSVGElement {
    const svgNs = "http://www.w3.org/2000/svg";
    const svg = document.createElementNS(svgNs, "svg");
    svg.id = "graph-svg";
    svg.setAttribute("xmlns", svgNs);
    svg.setAttribute("width", String(GRAPH_WIDTH));
    svg.setAttribute("height", String(GRAPH_HEIGHT));
    svg.setAttribute("viewBox", `0 0 ${GRAPH_WIDTH} ${GRAPH_HEIGHT}`);

    const all = [...childPoints, ...referencePoints];
    const heights = all.map(([, h]) => h);
    const yLo = Math.min(...heights) - 2;
    const yHi = Math.max(...heights) + 2;
    const [xLo, xHi] = ageSpan;
    const plotW = GRAPH_WIDTH - 2 * GRAPH_MARGIN;
    const plotH = GRAPH_HEIGHT - 2 * GRAPH_MARGIN;
    const sx = (age: number) =>
      GRAPH_MARGIN + (xHi === xLo ? plotW / 2 : ((age - xLo) / (xHi - xLo)) * plotW);
    const sy = (cm: number) =>
      GRAPH_HEIGHT - GRAPH_MARGIN - (yHi === yLo ? plotH / 2 : ((cm - yLo) / (yHi - yLo)) * plotH);

    const axes = document.createElementNS(svgNs, "path");
    axes.setAttribute("class", "axes");
    axes.setAttribute(
      "d",
      `M ${GRAPH_MARGIN} ${GRAPH_MARGIN} L ${GRAPH_MARGIN} ${GRAPH_HEIGHT - GRAPH_MARGIN} ` +
        `L ${GRAPH_WIDTH - GRAPH_MARGIN} ${GRAPH_HEIGHT - GRAPH_MARGIN}`,
    );
    svg.appendChild(axes);

    const tick = (id: string, x: number, text: string) => {
      const t = document.createElementNS(svgNs, "text");
      t.id = id;
      t.setAttribute("x", String(x));
      t.setAttribute("y", String(GRAPH_HEIGHT - GRAPH_MARGIN + 16));
      t.setAttribute("text-anchor", "middle");
      t.textContent = text;
      svg.appendChild(t);
    };
    tick("x-min-label", sx(xLo), `${xLo} mo`);
    tick("x-max-label", sx(xHi), `${xHi} mo`);

    // Graph view colors: child blue line, national average green line.
    const drawSeries = (points: ReadonlyArray<readonly [number, number]>, cls: string) => {
      if (points.length === 1) {
        const [age, cm] = points[0];
        const marker = document.createElementNS(svgNs, "circle");
        marker.setAttribute("class", `${cls}-marker`);
        marker.setAttribute("cx", String(sx(age)));
        marker.setAttribute("cy", String(sy(cm)));
        marker.setAttribute("r", "4");
        svg.appendChild(marker);
      } else if (points.length > 1) {
        const line = document.createElementNS(svgNs, "polyline");
        line.setAttribute("class", `${cls}-line`);
        line.setAttribute("points", points.map(([a, h]) => `${sx(a)},${sy(h)}`).join(" "));
        svg.appendChild(line);
      }
    };
    drawSeries(childPoints, "child");
    drawSeries(referencePoints, "reference");
    return svg;
  }
}
